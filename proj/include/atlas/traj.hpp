#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "atlas/core.hpp"
#include "atlas/error.hpp"

/**
 * @file traj.hpp
 *
 * @brief The tagged interaction format: `<think>`, `<route>` (alias
 * `<search>`), `<information>` and `<answer>` blocks, flat and
 * case-sensitive. Route bodies read `Model@@Tool:input`.
 */

namespace atlas::traj {

struct Think {
    std::string text;
    bool operator==(const Think&) const = default;
};
struct Route {
    std::string model;
    std::string tool;
    std::string input;
    bool operator==(const Route&) const = default;
};
struct Information {
    std::string text;
    bool operator==(const Information&) const = default;
};
struct Answer {
    std::string text;
    bool operator==(const Answer&) const = default;
};

using Segment = std::variant<Think, Route, Information, Answer>;

/// Half-open byte range into the trajectory text.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const Span&) const = default;
};

struct Trajectory {
    std::vector<Segment> segments;
    std::optional<std::string> raw_text;
    /// Byte span of each segment's block in raw_text (filled by parse).
    std::vector<Span> spans;

    template <typename T>
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& s : segments) {
            n += std::holds_alternative<T>(s) ? 1 : 0;
        }
        return n;
    }
};

enum class Rule { tag_integrity, invocation_syntax, unknown_pair, missing_think, answer_count, route_info_mismatch };

inline std::string_view to_string(Rule r) {
    switch (r) {
    case Rule::tag_integrity: return "tag_integrity";
    case Rule::invocation_syntax: return "invocation_syntax";
    case Rule::unknown_pair: return "unknown_pair";
    case Rule::missing_think: return "missing_think";
    case Rule::answer_count: return "answer_count";
    case Rule::route_info_mismatch: return "route_info_mismatch";
    }
    return "unknown";
}

inline Rule rule_from_string(std::string_view s) {
    for (auto r : {Rule::tag_integrity, Rule::invocation_syntax, Rule::unknown_pair, Rule::missing_think,
                   Rule::answer_count, Rule::route_info_mismatch}) {
        if (to_string(r) == s) {
            return r;
        }
    }
    throw Error(ErrorCode::schema_error, "unknown format rule '" + std::string(s) + "'");
}

struct FormatViolation {
    Rule rule;
    Span span;
    std::string detail;
};

struct ParseResult {
    std::optional<Trajectory> trajectory;
    std::vector<FormatViolation> violations;

    bool ok() const { return violations.empty(); }
};

namespace detail {

enum class Tag { think, route, search, information, answer };

struct TagToken {
    Tag tag;
    bool closing;
    std::size_t length;
};

inline constexpr std::array<std::pair<Tag, std::string_view>, 5> tag_names{{
    {Tag::think, "think"},
    {Tag::route, "route"},
    {Tag::search, "search"},
    {Tag::information, "information"},
    {Tag::answer, "answer"},
}};

inline std::string_view name_of(Tag t) {
    for (const auto& [tag, name] : tag_names) {
        if (tag == t) {
            return name;
        }
    }
    return "";
}

/// Recognizes a known opening or closing tag starting at `pos`.
inline std::optional<TagToken> tag_at(std::string_view text, std::size_t pos) {
    if (pos >= text.size() || text[pos] != '<') {
        return std::nullopt;
    }
    std::size_t p = pos + 1;
    const bool closing = p < text.size() && text[p] == '/';
    if (closing) {
        ++p;
    }
    for (const auto& [tag, name] : tag_names) {
        if (text.compare(p, name.size(), name) == 0 && p + name.size() < text.size() &&
            text[p + name.size()] == '>') {
            return TagToken{tag, closing, p + name.size() + 1 - pos};
        }
    }
    return std::nullopt;
}

/// First known tag token in [from, to), if any.
inline std::optional<std::pair<std::size_t, TagToken>> find_tag(std::string_view text, std::size_t from,
                                                                 std::size_t to) {
    for (std::size_t i = text.find('<', from); i != std::string_view::npos && i < to; i = text.find('<', i + 1)) {
        if (auto tok = tag_at(text, i)) {
            return std::pair{i, *tok};
        }
    }
    return std::nullopt;
}

inline bool contains_tag(std::string_view text) { return find_tag(text, 0, text.size()).has_value(); }

struct RouteSplit {
    std::string_view model, tool, input;
};

inline std::optional<RouteSplit> split_route(std::string_view body, std::string& why) {
    const auto at = body.find("@@");
    if (at == std::string_view::npos) {
        why = "route body lacks '@@'";
        return std::nullopt;
    }
    const auto rest = body.substr(at + 2);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
        why = "route body lacks ':' after the tool name";
        return std::nullopt;
    }
    RouteSplit s{body.substr(0, at), rest.substr(0, colon), rest.substr(colon + 1)};
    if (s.model.empty() || s.tool.empty()) {
        why = "route has an empty model or tool name";
        return std::nullopt;
    }
    if (s.model.find(':') != std::string_view::npos) {
        why = "model name contains ':'";
        return std::nullopt;
    }
    return s;
}

} // namespace detail

/**
 * Parses the flat tag sequence. Text outside known tags is ignored. On
 * success every block becomes one segment in document order; otherwise every
 * independent tag-integrity, invocation-syntax and duplicate-answer problem
 * is reported and no trajectory is returned.
 */
inline ParseResult parse(std::string_view text) {
    using detail::Tag;
    ParseResult result;
    Trajectory traj;
    traj.raw_text = std::string(text);
    std::size_t answers = 0;

    std::size_t pos = 0;
    while (auto found = detail::find_tag(text, pos, text.size())) {
        const auto [start, tok] = *found;
        if (tok.closing) {
            result.violations.push_back({Rule::tag_integrity, {start, start + tok.length},
                                         "unmatched </" + std::string(detail::name_of(tok.tag)) + ">"});
            pos = start + tok.length;
            continue;
        }
        const std::string closer = "</" + std::string(detail::name_of(tok.tag)) + ">";
        const std::size_t body_start = start + tok.length;
        const std::size_t close_pos = text.find(closer, body_start);
        if (close_pos == std::string_view::npos) {
            result.violations.push_back({Rule::tag_integrity, {start, body_start},
                                         "unclosed <" + std::string(detail::name_of(tok.tag)) + ">"});
            pos = body_start;
            continue;
        }
        const Span block{start, close_pos + closer.size()};
        pos = block.end;
        if (auto inner = detail::find_tag(text, body_start, close_pos)) {
            result.violations.push_back({Rule::tag_integrity, {inner->first, inner->first + inner->second.length},
                                         "tag inside <" + std::string(detail::name_of(tok.tag)) + "> block"});
            continue;
        }
        const std::string_view body = text.substr(body_start, close_pos - body_start);
        switch (tok.tag) {
        case Tag::think: traj.segments.emplace_back(Think{std::string(body)}); break;
        case Tag::information: traj.segments.emplace_back(Information{std::string(body)}); break;
        case Tag::answer:
            if (++answers > 1) {
                result.violations.push_back({Rule::answer_count, block, "more than one <answer> block"});
            }
            traj.segments.emplace_back(Answer{std::string(body)});
            break;
        case Tag::route:
        case Tag::search: {
            std::string why;
            if (auto split = detail::split_route(body, why)) {
                traj.segments.emplace_back(
                    Route{std::string(split->model), std::string(split->tool), std::string(split->input)});
            } else {
                result.violations.push_back({Rule::invocation_syntax, block, why});
                continue;
            }
            break;
        }
        }
        traj.spans.push_back(block);
    }
    if (result.violations.empty()) {
        result.trajectory = std::move(traj);
    }
    return result;
}

namespace detail {

struct Rendered {
    std::string text;
    std::vector<Span> spans;
};

inline void append_block(Rendered& out, std::string_view name, std::string_view body) {
    if (contains_tag(body)) {
        throw Error(ErrorCode::render_error, "<" + std::string(name) + "> text contains a literal tag");
    }
    const std::size_t begin = out.text.size();
    out.text += '<';
    out.text += name;
    out.text += '>';
    out.text += body;
    out.text += "</";
    out.text += name;
    out.text += '>';
    out.spans.push_back({begin, out.text.size()});
}

inline Rendered render_with_spans(const Trajectory& t) {
    Rendered out;
    for (const auto& seg : t.segments) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, Think>) {
                    append_block(out, "think", s.text);
                } else if constexpr (std::is_same_v<T, Information>) {
                    append_block(out, "information", s.text);
                } else if constexpr (std::is_same_v<T, Answer>) {
                    append_block(out, "answer", s.text);
                } else {
                    if (s.model.empty() || s.tool.empty() || s.model.find("@@") != std::string::npos ||
                        s.model.find(':') != std::string::npos || s.tool.find("@@") != std::string::npos ||
                        s.tool.find(':') != std::string::npos) {
                        throw Error(ErrorCode::render_error, "route names '" + s.model + "', '" + s.tool +
                                                                 "' cannot be written unambiguously");
                    }
                    append_block(out, "route", s.model + "@@" + s.tool + ":" + s.input);
                }
            },
            seg);
    }
    return out;
}

} // namespace detail

/// Canonical text form. Throws render_error when a segment's text contains a
/// literal tag, since the format has no escaping.
inline std::string render(const Trajectory& t) { return detail::render_with_spans(t).text; }

/**
 * Checks pool membership of every route, presence of a think block, a single
 * concluding answer, and route/information count parity. Returns all
 * violations; empty means the trajectory is well formed.
 */
inline std::vector<FormatViolation> validate_structure(const Trajectory& t, const RoutingPool& pool) {
    std::vector<Span> spans = t.spans;
    std::size_t doc_len = t.raw_text ? t.raw_text->size() : 0;
    if (spans.size() != t.segments.size()) {
        try {
            auto r = detail::render_with_spans(t);
            spans = std::move(r.spans);
            doc_len = r.text.size();
        } catch (const Error&) {
            spans.assign(t.segments.size(), Span{0, doc_len});
        }
    }
    const Span whole{0, doc_len};

    std::vector<FormatViolation> out;
    std::size_t answers = 0;
    std::optional<std::size_t> last_answer;
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
        if (const auto* r = std::get_if<Route>(&t.segments[i])) {
            if (!pool.find_model(r->model)) {
                out.push_back({Rule::unknown_pair, spans[i], "model '" + r->model + "' is not in the pool"});
            } else if (!pool.find_tool(r->tool)) {
                out.push_back({Rule::unknown_pair, spans[i], "tool '" + r->tool + "' is not in the pool"});
            }
        } else if (std::holds_alternative<Answer>(t.segments[i])) {
            ++answers;
            last_answer = i;
        }
    }
    if (t.count<Think>() == 0) {
        out.push_back({Rule::missing_think, whole, "no <think> block"});
    }
    if (answers != 1) {
        out.push_back({Rule::answer_count, last_answer ? spans[*last_answer] : whole,
                       "expected exactly one <answer> block, found " + std::to_string(answers)});
    } else if (*last_answer + 1 != t.segments.size()) {
        out.push_back({Rule::answer_count, spans[*last_answer], "<answer> is not the final block"});
    }
    const auto routes = t.count<Route>();
    const auto infos = t.count<Information>();
    if (routes != infos) {
        out.push_back({Rule::route_info_mismatch, whole,
                       std::to_string(routes) + " route blocks vs " + std::to_string(infos) + " information blocks"});
    }
    return out;
}

/// Parse-stage violations if the text does not parse, otherwise the
/// structural violations of the parsed trajectory.
inline std::vector<FormatViolation> check_text(std::string_view text, const RoutingPool& pool) {
    auto parsed = parse(text);
    if (!parsed.ok()) {
        return std::move(parsed.violations);
    }
    return validate_structure(*parsed.trajectory, pool);
}

/// Final answer text, if the trajectory has an answer block (the last one wins).
inline std::optional<std::string> final_answer(const Trajectory& t) {
    for (auto it = t.segments.rbegin(); it != t.segments.rend(); ++it) {
        if (const auto* a = std::get_if<Answer>(&*it)) {
            return a->text;
        }
    }
    return std::nullopt;
}

} // namespace atlas::traj
