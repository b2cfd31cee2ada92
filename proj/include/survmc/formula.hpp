#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Model formula mini-language:
//   surv(entry, time, upper, status) ~ x1 + tve(x2, degree=0, knots=[4]) + (1 | site)
//
// Response forms: surv(time, status), surv(entry, time, status),
// surv(entry, time, upper, status), or named arguments (time=, status=,
// entry=, upper=).  Random effects: (1 | f) for an intercept, (x | f) or
// (1 + x | f) for a correlated intercept and slope.

namespace survmc {

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t pos, const std::string& what)
      : std::runtime_error("formula syntax error at position " +
                           std::to_string(pos) + ": " + what),
        position(pos) {}
  std::size_t position;
};

class UnknownFunction : public std::runtime_error {
 public:
  UnknownFunction(std::size_t pos, const std::string& name)
      : std::runtime_error("unknown function '" + name + "' at position " +
                           std::to_string(pos)) {}
};

class DuplicateResponse : public std::runtime_error {
 public:
  DuplicateResponse() : std::runtime_error("formula has more than one response") {}
};

struct FormulaTve {
  std::string covariate;
  std::optional<int> degree;
  std::optional<int> df;
  std::vector<double> knots;
  std::size_t position = 0;
};

struct FormulaRe {
  bool intercept = true;
  std::string slope;  // empty: intercept only
  std::string factor;
};

struct FormulaAst {
  std::string entry, time, upper, status;  // empty when absent
  std::vector<std::string> plain;          // plain covariate terms
  std::vector<FormulaTve> tve;
  std::vector<FormulaRe> re;

  std::vector<std::string> all_covariates() const {
    std::vector<std::string> out = plain;
    for (const auto& t : tve) out.push_back(t.covariate);
    for (const auto& r : re)
      if (!r.slope.empty()) out.push_back(r.slope);
    std::vector<std::string> uniq;
    for (const auto& c : out)
      if (std::find(uniq.begin(), uniq.end(), c) == uniq.end()) uniq.push_back(c);
    return uniq;
  }
};

namespace formula_detail {

struct Lexer {
  const std::string& s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  bool accept(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c, const std::string& what) {
    if (!accept(c)) throw SyntaxError(pos, "expected '" + std::string(1, c) +
                                               "' " + what);
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }
  std::string ident() {
    skip_ws();
    const std::size_t start = pos;
    while (pos < s.size() && ident_char(s[pos])) ++pos;
    if (pos == start) throw SyntaxError(pos, "expected an identifier");
    return s.substr(start, pos - start);
  }
  double number() {
    skip_ws();
    std::size_t consumed = 0;
    double v;
    try {
      v = std::stod(s.substr(pos), &consumed);
    } catch (const std::exception&) {
      throw SyntaxError(pos, "expected a number");
    }
    pos += consumed;
    return v;
  }
};

inline void parse_response(Lexer& lex, FormulaAst& ast) {
  const std::size_t at = lex.pos;
  const std::string fn = lex.ident();
  if (fn != "surv" && fn != "Surv") throw UnknownFunction(at, fn);
  lex.expect('(', "after surv");
  std::vector<std::string> positional;
  bool named = false;
  do {
    std::string name = lex.ident();
    if (lex.accept('=')) {
      named = true;
      const std::string value = lex.ident();
      if (name == "entry") ast.entry = value;
      else if (name == "time") ast.time = value;
      else if (name == "upper") ast.upper = value;
      else if (name == "status") ast.status = value;
      else throw SyntaxError(lex.pos, "unknown surv() argument '" + name + "'");
    } else {
      positional.push_back(name);
    }
  } while (lex.accept(','));
  lex.expect(')', "to close surv(...)");
  if (named && !positional.empty())
    throw SyntaxError(lex.pos, "surv() mixes named and positional arguments");
  if (!named) {
    switch (positional.size()) {
      case 2:
        ast.time = positional[0];
        ast.status = positional[1];
        break;
      case 3:  // counting-process style: (entry, exit, status)
        ast.entry = positional[0];
        ast.time = positional[1];
        ast.status = positional[2];
        break;
      case 4:
        ast.entry = positional[0];
        ast.time = positional[1];
        ast.upper = positional[2];
        ast.status = positional[3];
        break;
      default:
        throw SyntaxError(lex.pos, "surv() takes 2 to 4 arguments");
    }
  }
  if (ast.time.empty() || ast.status.empty())
    throw SyntaxError(lex.pos, "surv() needs time and status columns");
}

inline FormulaTve parse_tve(Lexer& lex) {
  FormulaTve tve;
  tve.position = lex.pos;
  lex.expect('(', "after tve");
  tve.covariate = lex.ident();
  while (lex.accept(',')) {
    const std::size_t at = lex.pos;
    const std::string key = lex.ident();
    lex.expect('=', "after tve option name");
    if (key == "degree") {
      tve.degree = static_cast<int>(lex.number());
    } else if (key == "df") {
      tve.df = static_cast<int>(lex.number());
    } else if (key == "knots") {
      if (lex.accept('[')) {
        do {
          tve.knots.push_back(lex.number());
        } while (lex.accept(','));
        lex.expect(']', "to close the knot list");
      } else {
        tve.knots.push_back(lex.number());
      }
    } else {
      throw SyntaxError(at, "unknown tve option '" + key + "'");
    }
  }
  lex.expect(')', "to close tve(...)");
  return tve;
}

inline FormulaRe parse_re(Lexer& lex) {
  FormulaRe re;
  bool saw_intercept = false;
  std::vector<std::string> terms;
  do {
    if (lex.peek() == '1') {
      lex.accept('1');
      saw_intercept = true;
    } else if (lex.peek() == '0') {
      throw SyntaxError(lex.pos, "random effects without an intercept are not supported");
    } else {
      terms.push_back(lex.ident());
    }
  } while (lex.accept('+'));
  lex.expect('|', "between the random-effect expression and the factor");
  re.factor = lex.ident();
  lex.expect(')', "to close the random-effect term");
  if (terms.size() > 1)
    throw SyntaxError(lex.pos, "at most one random slope per factor");
  re.intercept = true;
  (void)saw_intercept;  // (x | f) implies an intercept, as in lme4
  if (!terms.empty()) re.slope = terms[0];
  return re;
}

}  // namespace formula_detail

inline FormulaAst parse_formula(const std::string& text) {
  if (text.empty()) throw SyntaxError(0, "empty formula");
  formula_detail::Lexer lex{text};
  FormulaAst ast;
  formula_detail::parse_response(lex, ast);
  lex.expect('~', "between response and terms");
  bool first = true;
  while (!lex.eof()) {
    if (!first) lex.expect('+', "between terms");
    first = false;
    if (lex.accept('(')) {
      ast.re.push_back(formula_detail::parse_re(lex));
      continue;
    }
    const std::size_t at = lex.pos;
    const std::string name = lex.ident();
    if (name == "surv" || name == "Surv") throw DuplicateResponse();
    if (lex.peek() == '(') {
      if (name != "tve") throw UnknownFunction(at, name);
      ast.tve.push_back(formula_detail::parse_tve(lex));
      continue;
    }
    if (name == "1") continue;  // explicit intercept; always present anyway
    ast.plain.push_back(name);
  }
  for (std::size_t i = 0; i < ast.tve.size(); ++i)
    for (std::size_t j = i + 1; j < ast.tve.size(); ++j)
      if (ast.tve[i].covariate == ast.tve[j].covariate)
        throw SyntaxError(ast.tve[j].position, "duplicate tve() for covariate");
  return ast;
}

}  // namespace survmc
