#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tsarch {

/// Atom of a preference term over objective index `metric` (1-based):
///   Rescaled  fhat_i       (front-relative, in [0,1] for front members)
///   Raw       f_i
///   Step      0 if f_i <= tau else rho          (rho > 0)
///   Hinge     max(0, f_i - tau)
///   Log2      log2(f_i)                         (f_i must be positive)
enum class AtomKind { Rescaled, Raw, Step, Hinge, Log2 };

struct Term {
    double coeff = 1.0;
    AtomKind kind = AtomKind::Rescaled;
    int metric = 1;
    double tau = 0.0;
    double rho = 0.0;
};

/// Sum of terms; the whole p1..p10 family is expressible.
struct PreferenceExpr {
    std::vector<Term> terms;
};

struct MonotonicityReport {
    bool is_nondecreasing = true;
    std::vector<std::size_t> offending_terms;  // 1-based term positions
};

/// Grammar:  expr := term ('+' term)* ;  term := number '*' atom | atom ;
///           atom := 'fhat'i | 'f'i | 'step(f'i',' tau ',' rho ')'
///                 | 'hinge(f'i',' tau ')' | 'log2(f'i')'
/// Whitespace-insensitive; numbers accept scientific notation; errors carry
/// the source position.
PreferenceExpr parse_preference(const std::string& text);

/// Canonical text form; parse(render(e)) is structurally equal to e.
std::string render(const PreferenceExpr& expr);

/// A term is nondecreasing in its metric iff its coefficient is >= 0
/// (Step penalties are positive by construction).
MonotonicityReport check_monotone(const PreferenceExpr& expr);

/// The built-in preference family p1..p10.
PreferenceExpr builtin_preference(const std::string& name);

/// Builtin name if it matches p1..p10, otherwise parsed as an expression.
PreferenceExpr preference_from(const std::string& name_or_expr);

double evaluate(const PreferenceExpr& expr, const std::vector<double>& raw,
                const std::vector<double>& rescaled);

}  // namespace tsarch
