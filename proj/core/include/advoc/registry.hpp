#pragma once

#include <json.hpp>
#include <string>

#include "advoc/mollify.hpp"

namespace advoc::registry {

using Vec = Eigen::VectorXd;
using mollify::LipschitzField;

// Build a field from a JSON description {"kind": ..., parameters...}.
// Supported kinds:
//   dynamics: "zero", "affine" (A, offsets per u), "affine_uv" (A, offsets
//             per u,v), "abs_bilinear" (scale * |x0| * u * v),
//             "abs_sum" (sum_i coeffs[i] * |x[i]-shifts[i]| + constant
//                        + cu * u + cv * v)
//   endpoint: "linear" (coeffs . x + offset), "constant" (value),
//             "abs_of_coord" (scale * |x[i] - center| + offset)
// u/v grid values are baked into the closure; dim_state/dim_out fix shapes.
// "lipschitz" is required (the declared constant); "bound" is optional.
LipschitzField make_field(const nlohmann::json& desc, int dim_state, int dim_out,
                          const Vec& lo, const Vec& hi, double collar,
                          const Vec& u_values, const Vec& v_values);

bool known_kind(const std::string& kind);

} // namespace advoc::registry
