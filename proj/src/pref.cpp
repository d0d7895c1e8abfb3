#include "tsarch/pref.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "tsarch/errors.hpp"

namespace tsarch {

namespace {

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    PreferenceExpr parse() {
        PreferenceExpr expr;
        skip_ws();
        if (eof()) throw SyntaxError(pos_, "a term");
        expr.terms.push_back(term());
        skip_ws();
        while (!eof()) {
            expect('+', "'+' between terms");
            expr.terms.push_back(term());
            skip_ws();
        }
        return expr;
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\n' || peek() == '\r')) ++pos_;
    }
    void expect(char c, const std::string& what) {
        skip_ws();
        if (eof() || peek() != c) throw SyntaxError(pos_, what);
        ++pos_;
    }

    bool starts_number() {
        skip_ws();
        if (eof()) return false;
        const char c = peek();
        if (c >= '0' && c <= '9') return true;
        if (c == '.') return true;
        if ((c == '+' || c == '-') && pos_ + 1 < text_.size()) {
            const char n = text_[pos_ + 1];
            return (n >= '0' && n <= '9') || n == '.';
        }
        return false;
    }

    double number() {
        skip_ws();
        const std::size_t start = pos_;
        const char* begin = text_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw InvalidNumber(pos_, std::string(1, eof() ? ' ' : peek()));
        pos_ += static_cast<std::size_t>(end - begin);
        if (!std::isfinite(v)) throw InvalidNumber(start, text_.substr(start, pos_ - start));
        return v;
    }

    int metric_after_f() {
        // caller consumed the 'f' (or 'fhat') prefix
        if (eof() || peek() < '0' || peek() > '9') throw SyntaxError(pos_, "a metric digit after 'f'");
        const int digit = peek() - '0';
        const std::size_t at = pos_;
        ++pos_;
        if (digit < 1 || digit > 3) throw UnknownMetric(at, digit);
        return digit;
    }

    bool consume_word(const char* word) {
        skip_ws();
        std::size_t i = 0;
        while (word[i] != '\0') {
            if (pos_ + i >= text_.size() || text_[pos_ + i] != word[i]) return false;
            ++i;
        }
        pos_ += i;
        return true;
    }

    Term atom(double coeff) {
        skip_ws();
        if (eof()) throw SyntaxError(pos_, "an atom");
        Term t;
        t.coeff = coeff;
        if (consume_word("fhat")) {
            t.kind = AtomKind::Rescaled;
            t.metric = metric_after_f();
            return t;
        }
        if (consume_word("step")) {
            expect('(', "'(' after step");
            expect('f', "'f' metric inside step");
            t.kind = AtomKind::Step;
            t.metric = metric_after_f();
            expect(',', "',' before step threshold");
            t.tau = number();
            expect(',', "',' before step penalty");
            const std::size_t rho_at = pos_;
            t.rho = number();
            if (!(t.rho > 0.0)) throw SyntaxError(rho_at, "a positive step penalty");
            expect(')', "')' closing step");
            return t;
        }
        if (consume_word("hinge")) {
            expect('(', "'(' after hinge");
            expect('f', "'f' metric inside hinge");
            t.kind = AtomKind::Hinge;
            t.metric = metric_after_f();
            expect(',', "',' before hinge threshold");
            t.tau = number();
            expect(')', "')' closing hinge");
            return t;
        }
        if (consume_word("log2")) {
            expect('(', "'(' after log2");
            expect('f', "'f' metric inside log2");
            t.kind = AtomKind::Log2;
            t.metric = metric_after_f();
            expect(')', "')' closing log2");
            return t;
        }
        if (consume_word("f")) {
            t.kind = AtomKind::Raw;
            t.metric = metric_after_f();
            return t;
        }
        throw SyntaxError(pos_, "an atom (fhat_i, f_i, step, hinge or log2)");
    }

    Term term() {
        skip_ws();
        if (starts_number()) {
            const double coeff = number();
            expect('*', "'*' between coefficient and atom");
            return atom(coeff);
        }
        return atom(1.0);
    }
};

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

PreferenceExpr parse_preference(const std::string& text) {
    if (text.empty()) throw SyntaxError(0, "a non-empty preference expression");
    return Parser(text).parse();
}

std::string render(const PreferenceExpr& expr) {
    std::string out;
    for (std::size_t i = 0; i < expr.terms.size(); ++i) {
        const Term& t = expr.terms[i];
        if (i) out += " + ";
        out += format_double(t.coeff);
        out += "*";
        const std::string fi = "f" + std::to_string(t.metric);
        switch (t.kind) {
            case AtomKind::Rescaled: out += "fhat" + std::to_string(t.metric); break;
            case AtomKind::Raw: out += fi; break;
            case AtomKind::Step: out += "step(" + fi + ", " + format_double(t.tau) + ", " + format_double(t.rho) + ")"; break;
            case AtomKind::Hinge: out += "hinge(" + fi + ", " + format_double(t.tau) + ")"; break;
            case AtomKind::Log2: out += "log2(" + fi + ")"; break;
        }
    }
    return out;
}

MonotonicityReport check_monotone(const PreferenceExpr& expr) {
    MonotonicityReport report;
    for (std::size_t i = 0; i < expr.terms.size(); ++i) {
        if (expr.terms[i].coeff < 0.0) report.offending_terms.push_back(i + 1);
    }
    report.is_nondecreasing = report.offending_terms.empty();
    return report;
}

PreferenceExpr builtin_preference(const std::string& name) {
    // §4.2 p1-p4, §5.2 p5-p7, §7.2 p8-p10
    if (name == "p1") return parse_preference("0.3333333333333333*fhat1 + 0.3333333333333333*fhat2 + 0.3333333333333333*fhat3");
    if (name == "p2") return parse_preference("fhat1");
    if (name == "p3") return parse_preference("fhat2");
    if (name == "p4") return parse_preference("0.6*fhat1 + 0.2*fhat2 + 0.2*fhat3");
    if (name == "p5") return parse_preference("step(f1, 0.06, 1e3) + 0.5*fhat2 + 0.5*fhat3");
    if (name == "p6") return parse_preference("fhat1 + step(f2, 1000, 1e3) + step(f3, 35000, 1e3)");
    if (name == "p7") return parse_preference("0.7*fhat1 + 0.01*log2(f2) + 0.01*hinge(f3, 20000)");
    if (name == "p8") return parse_preference("step(f1, 0.04, 1e3) + 0.5*fhat2 + 0.5*fhat3");
    if (name == "p9") return parse_preference("fhat1 + step(f2, 500, 1e3) + step(f3, 35000, 1e3)");
    if (name == "p10") return parse_preference("0.7*fhat1 + 0.001*hinge(f2, 500) + 0.01*log2(f3)");
    throw UnknownBuiltin(name);
}

PreferenceExpr preference_from(const std::string& name_or_expr) {
    if (name_or_expr.size() >= 2 && name_or_expr[0] == 'p') {
        bool digits = true;
        for (std::size_t i = 1; i < name_or_expr.size(); ++i)
            if (name_or_expr[i] < '0' || name_or_expr[i] > '9') digits = false;
        if (digits) return builtin_preference(name_or_expr);
    }
    return parse_preference(name_or_expr);
}

double evaluate(const PreferenceExpr& expr, const std::vector<double>& raw,
                const std::vector<double>& rescaled) {
    if (expr.terms.empty()) throw DomainError("preference has no terms");
    double total = 0.0;
    for (const Term& t : expr.terms) {
        const std::size_t i = static_cast<std::size_t>(t.metric - 1);
        double atom = 0.0;
        switch (t.kind) {
            case AtomKind::Rescaled:
                if (i >= rescaled.size()) throw DimensionMismatch(t.metric, rescaled.size());
                atom = rescaled[i];
                break;
            case AtomKind::Raw:
                if (i >= raw.size()) throw DimensionMismatch(t.metric, raw.size());
                atom = raw[i];
                break;
            case AtomKind::Step:
                if (i >= raw.size()) throw DimensionMismatch(t.metric, raw.size());
                atom = raw[i] > t.tau ? t.rho : 0.0;  // boundary belongs to the zero branch
                break;
            case AtomKind::Hinge:
                if (i >= raw.size()) throw DimensionMismatch(t.metric, raw.size());
                atom = std::max(0.0, raw[i] - t.tau);
                break;
            case AtomKind::Log2:
                if (i >= raw.size()) throw DimensionMismatch(t.metric, raw.size());
                if (!(raw[i] > 0.0)) throw DomainError("log2 of non-positive f" + std::to_string(t.metric));
                atom = std::log2(raw[i]);
                break;
        }
        total += t.coeff * atom;
    }
    return total;
}

}  // namespace tsarch
