#include "cdcopula/links.hpp"

#include <cmath>

#include "cdcopula/errors.hpp"
#include "cdcopula/special_functions.hpp"

namespace cdcopula {

using special::kLn2;
using special::logistic;

LinkKind link_kind_from_string(const std::string& name) {
  if (name == "identity") return LinkKind::kIdentity;
  if (name == "log") return LinkKind::kLog;
  if (name == "logit") return LinkKind::kLogit;
  if (name == "glogit") return LinkKind::kGlogit;
  throw ConfigError("unknown link '" + name + "'");
}

std::string to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::kIdentity:
      return "identity";
    case LinkKind::kLog:
      return "log";
    case LinkKind::kLogit:
      return "logit";
    case LinkKind::kGlogit:
      return "glogit";
  }
  return "?";
}

void validate(const LinkSpec& spec) {
  if (spec.kind == LinkKind::kGlogit && !(spec.a < spec.b)) throw DomainError("glogit: need a < b");
}

double link_eval(const LinkSpec& spec, double eta) {
  switch (spec.kind) {
    case LinkKind::kIdentity:
      return eta;
    case LinkKind::kLog:
      return std::exp(eta);
    case LinkKind::kLogit:
      return logistic(eta);
    case LinkKind::kGlogit:
      return spec.a + (spec.b - spec.a) * logistic(eta);
  }
  return eta;
}

double link_eval_derivative(const LinkSpec& spec, double eta) {
  switch (spec.kind) {
    case LinkKind::kIdentity:
      return 1.0;
    case LinkKind::kLog:
      return std::exp(eta);
    case LinkKind::kLogit: {
      const double s = logistic(eta);
      return s * logistic(-eta);
    }
    case LinkKind::kGlogit: {
      const double s = logistic(eta);
      return (spec.b - spec.a) * s * logistic(-eta);
    }
  }
  return 1.0;
}

double link_forward(const LinkSpec& spec, double value) {
  switch (spec.kind) {
    case LinkKind::kIdentity:
      return value;
    case LinkKind::kLog:
      if (!(value > 0.0)) throw DomainError("log link: value must be positive");
      return std::log(value);
    case LinkKind::kLogit:
      if (!(value > 0.0 && value < 1.0)) throw DomainError("logit link: value must lie in (0, 1)");
      return std::log(value) - std::log1p(-value);
    case LinkKind::kGlogit:
      if (!(value > spec.a && value < spec.b)) throw DomainError("glogit link: value outside (a, b)");
      return std::log(value - spec.a) - std::log(spec.b - value);
  }
  return value;
}

double link_jacobian(const LinkSpec& spec, double value) {
  switch (spec.kind) {
    case LinkKind::kIdentity:
      return 1.0;
    case LinkKind::kLog:
      if (!(value > 0.0)) throw DomainError("log link: value must be positive");
      return 1.0 / value;
    case LinkKind::kLogit:
      if (!(value > 0.0 && value < 1.0)) throw DomainError("logit link: value must lie in (0, 1)");
      return 1.0 / (value * (1.0 - value));
    case LinkKind::kGlogit:
      if (!(value > spec.a && value < spec.b)) throw DomainError("glogit link: value outside (a, b)");
      return (spec.b - spec.a) / ((value - spec.a) * (spec.b - value));
  }
  return 1.0;
}

double conditional_tau_lower_bound(double lambda_l) {
  if (!(lambda_l > 0.0 && lambda_l < 1.0)) throw DomainError("conditional tau link: lambda_L must lie in (0, 1)");
  return kLn2 / (kLn2 - std::log(lambda_l));
}

double conditional_tau_lower_bound_derivative(double lambda_l) {
  if (!(lambda_l > 0.0 && lambda_l < 1.0)) throw DomainError("conditional tau link: lambda_L must lie in (0, 1)");
  const double den = kLn2 - std::log(lambda_l);
  return kLn2 / (lambda_l * den * den);
}

LinkSpec conditional_tau_link(double lambda_l) {
  return {LinkKind::kGlogit, conditional_tau_lower_bound(lambda_l), 1.0};
}

}  // namespace cdcopula
