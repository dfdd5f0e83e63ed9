#pragma once

#include <string>

// Link functions connecting a linear predictor eta = x'beta to a model
// parameter. Naming: link_forward maps parameter -> eta, link_eval maps
// eta -> parameter.

namespace cdcopula {

enum class LinkKind { kIdentity, kLog, kLogit, kGlogit };

struct LinkSpec {
  LinkKind kind = LinkKind::kIdentity;
  double a = 0.0;  // glogit bounds, a < b
  double b = 1.0;
};

LinkKind link_kind_from_string(const std::string& name);
std::string to_string(LinkKind kind);

void validate(const LinkSpec& spec);

double link_eval(const LinkSpec& spec, double eta);
// d parameter / d eta evaluated at eta.
double link_eval_derivative(const LinkSpec& spec, double eta);
double link_forward(const LinkSpec& spec, double value);
// d eta / d parameter evaluated at the parameter value.
double link_jacobian(const LinkSpec& spec, double value);

// glogit(eta, a, b) for tau given lambda_L: a = log 2 / (log 2 - log lambda_L), b = 1.
LinkSpec conditional_tau_link(double lambda_l);
double conditional_tau_lower_bound(double lambda_l);
// d a / d lambda_L.
double conditional_tau_lower_bound_derivative(double lambda_l);

}  // namespace cdcopula
