#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "atlas/error.hpp"
#include "json.hpp"

/**
 * @file calculator.hpp
 *
 * @brief Arithmetic evaluator backing the calculator tool.
 *
 * Grammar (lowest to highest precedence):
 *
 *     expr    := term (('+' | '-') term)*
 *     term    := unary (('*' | '/' | '×' | '÷') unary)*
 *     unary   := ('+' | '-') unary | power
 *     power   := primary (('^' | '**') unary)?      right associative
 *     primary := number | '(' expr ')' | name '(' expr ')' | 'pi' | 'e'
 *
 * Functions: sqrt, abs, exp, ln, log (base 10), floor, ceil.
 */

namespace atlas::calc {

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    long double parse() {
        long double v = expr();
        skip_ws();
        if (pos_ != src_.size()) {
            fail("unexpected '" + std::string(src_.substr(pos_, 1)) + "'");
        }
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::parse_error, what + " at offset " + std::to_string(pos_));
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
    }

    bool eat(std::string_view tok) {
        skip_ws();
        if (src_.compare(pos_, tok.size(), tok) == 0) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    long double expr() {
        long double v = term();
        for (;;) {
            if (eat("+")) {
                v += term();
            } else if (peek_minus()) {
                v -= term();
            } else {
                return v;
            }
        }
    }

    bool peek_minus() { return eat("-") || eat("−"); }

    long double term() {
        long double v = unary();
        for (;;) {
            skip_ws();
            if (src_.compare(pos_, 2, "**") == 0) {
                return v; // handled by power()
            }
            if (eat("*") || eat("×")) {
                v *= unary();
            } else if (eat("/") || eat("÷")) {
                const long double d = unary();
                if (d == 0) {
                    fail("division by zero");
                }
                v /= d;
            } else {
                return v;
            }
        }
    }

    long double unary() {
        if (eat("+")) {
            return unary();
        }
        if (peek_minus()) {
            return -unary();
        }
        return power();
    }

    long double power() {
        long double base = primary();
        if (eat("**") || eat("^")) {
            const long double e = unary();
            const long double r = std::pow(base, e);
            if (!std::isfinite(static_cast<double>(r))) {
                fail("power overflow or domain error");
            }
            return r;
        }
        return base;
    }

    long double primary() {
        skip_ws();
        if (pos_ >= src_.size()) {
            fail("unexpected end of expression");
        }
        if (eat("(")) {
            long double v = expr();
            if (!eat(")")) {
                fail("expected ')'");
            }
            return v;
        }
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            return number();
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
            }
            const std::string name(src_.substr(start, pos_ - start));
            if (name == "pi") {
                return 3.141592653589793238462643383279502884L;
            }
            if (name == "e") {
                return 2.718281828459045235360287471352662498L;
            }
            if (!eat("(")) {
                fail("unknown identifier '" + name + "'");
            }
            const long double arg = expr();
            if (!eat(")")) {
                fail("expected ')'");
            }
            return apply(name, arg);
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    long double apply(const std::string& name, long double x) const {
        if (name == "sqrt") {
            if (x < 0) {
                fail("sqrt of a negative number");
            }
            return std::sqrt(x);
        }
        if (name == "abs") {
            return std::fabs(x);
        }
        if (name == "exp") {
            return std::exp(x);
        }
        if (name == "ln" || name == "log") {
            if (x <= 0) {
                fail("logarithm of a non-positive number");
            }
            return name == "ln" ? std::log(x) : std::log10(x);
        }
        if (name == "floor") {
            return std::floor(x);
        }
        if (name == "ceil") {
            return std::ceil(x);
        }
        fail("unknown function '" + name + "'");
    }

    long double number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
            ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) {
                ++p;
            }
            if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                pos_ = p;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    ++pos_;
                }
            }
        }
        const std::string lit(src_.substr(start, pos_ - start));
        char* end = nullptr;
        const long double v = std::strtold(lit.c_str(), &end);
        if (end != lit.c_str() + lit.size() || lit == ".") {
            fail("malformed number '" + lit + "'");
        }
        return v;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline long double evaluate(std::string_view expression) {
    const long double v = detail::Parser(expression).parse();
    if (!std::isfinite(static_cast<double>(v))) {
        throw Error(ErrorCode::parse_error, "result is not finite");
    }
    return v;
}

/**
 * Fixed-point rendering with round-half-even at `precision` decimals.
 * Products within a relative 1e-12 of a tie are treated as ties, so
 * binary representation error in inputs like 0.125 does not bias ties.
 */
inline std::string format_fixed(long double v, int precision) {
    const long double scale = std::pow(10.0L, precision);
    const long double scaled = v * scale;
    long double whole = std::floor(scaled);
    const long double frac = scaled - whole;
    const long double eps = 1e-12L * std::max(1.0L, std::fabs(scaled));
    if (std::fabs(frac - 0.5L) <= eps) {
        if (std::fmod(whole, 2.0L) != 0) {
            whole += 1;
        }
    } else if (frac > 0.5L) {
        whole += 1;
    }
    const long double rounded = whole / scale;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.*Lf", precision, rounded == 0 ? 0.0L : rounded);
    return buf;
}

/// Shortest natural rendering: integers without a decimal point, otherwise 12 significant digits.
inline std::string format_natural(long double v) {
    char buf[128];
    if (std::fabs(v) < 1e15L && v == std::floor(v)) {
        std::snprintf(buf, sizeof(buf), "%.0Lf", v == 0 ? 0.0L : v);
    } else {
        std::snprintf(buf, sizeof(buf), "%.12Lg", v);
    }
    return buf;
}

struct Request {
    std::string expression;
    std::string type = "evaluate";
    std::optional<int> precision;
};

/**
 * Extracts expression, computation type and precision from a tool input.
 * Accepts a JSON object (`{"expression": ..., "type": ..., "precision": n}`)
 * or plain text with optional `;key=value` suffixes
 * (`10/4; precision=2`).
 */
inline Request parse_request(std::string_view input, std::optional<int> default_precision = std::nullopt) {
    Request req;
    req.precision = default_precision;
    const auto first = input.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && input[first] == '{') {
        try {
            auto j = nlohmann::json::parse(input);
            req.expression = j.at("expression").get<std::string>();
            req.type = j.value("type", req.type);
            if (j.contains("precision") && !j.at("precision").is_null()) {
                req.precision = j.at("precision").get<int>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error, std::string("calculator request: ") + e.what());
        }
    } else {
        std::string_view rest = input;
        auto semi = rest.find(';');
        req.expression = std::string(rest.substr(0, semi));
        while (semi != std::string_view::npos) {
            rest = rest.substr(semi + 1);
            semi = rest.find(';');
            std::string_view kv = rest.substr(0, semi);
            auto eq = kv.find('=');
            if (eq == std::string_view::npos) {
                throw Error(ErrorCode::parse_error, "calculator option without '='");
            }
            auto trim = [](std::string_view s) {
                auto b = s.find_first_not_of(" \t");
                auto e = s.find_last_not_of(" \t");
                return b == std::string_view::npos ? std::string_view{} : s.substr(b, e - b + 1);
            };
            const auto key = trim(kv.substr(0, eq));
            const auto val = std::string(trim(kv.substr(eq + 1)));
            if (key == "precision") {
                try {
                    req.precision = std::stoi(val);
                } catch (const std::exception&) {
                    throw Error(ErrorCode::parse_error, "bad precision '" + val + "'");
                }
            } else if (key == "type") {
                req.type = val;
            } else {
                throw Error(ErrorCode::parse_error, "unknown calculator option '" + std::string(key) + "'");
            }
        }
    }
    if (req.type != "evaluate") {
        throw Error(ErrorCode::parse_error, "unsupported computation type '" + req.type + "'");
    }
    if (req.precision && (*req.precision < 0 || *req.precision > 30)) {
        throw Error(ErrorCode::parse_error, "precision must lie in [0, 30]");
    }
    return req;
}

inline std::string run(std::string_view input, std::optional<int> default_precision = std::nullopt) {
    const auto req = parse_request(input, default_precision);
    const long double v = evaluate(req.expression);
    return req.precision ? format_fixed(v, *req.precision) : format_natural(v);
}

} // namespace atlas::calc
