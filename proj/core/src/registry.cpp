#include "advoc/registry.hpp"

#include <cmath>
#include <set>

#include "advoc/errors.hpp"

namespace advoc::registry {

namespace {

using nlohmann::json;
using Mat = Eigen::MatrixXd;

Vec to_vec(const json& a) {
  Vec v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Mat to_mat(const json& a, int rows, int cols) {
  if (static_cast<int>(a.size()) != rows)
    throw DomainError("registry: matrix row count mismatch");
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(a[r].size()) != cols)
      throw DomainError("registry: matrix column count mismatch");
    for (int c = 0; c < cols; ++c) m(r, c) = a[r][c].get<double>();
  }
  return m;
}

const std::set<std::string> kKinds = {
    "zero", "affine", "affine_uv", "abs_bilinear", "abs_sum",
    "linear", "constant", "abs_of_coord"};

} // namespace

bool known_kind(const std::string& kind) { return kKinds.count(kind) > 0; }

LipschitzField make_field(const nlohmann::json& desc, int dim_state, int dim_out,
                          const Vec& lo, const Vec& hi, double collar,
                          const Vec& u_values, const Vec& v_values) {
  const std::string kind = desc.at("kind").get<std::string>();
  if (!known_kind(kind)) throw DomainError("unknown field kind: " + kind);

  LipschitzField fld;
  fld.dim_state = dim_state;
  fld.dim_out = dim_out;
  fld.lo = lo;
  fld.hi = hi;
  fld.collar = collar;
  fld.lipschitz_const = desc.value("lipschitz", 0.0);
  fld.bound = desc.value("bound", 0.0);

  const int d = dim_state, k = dim_out;

  if (kind == "zero") {
    fld.eval = [k](double, const double*, int, int, double* out) {
      for (int o = 0; o < k; ++o) out[o] = 0.0;
    };
  } else if (kind == "affine") {
    const Mat A = desc.contains("A") ? to_mat(desc.at("A"), k, d) : Mat::Zero(k, d);
    std::vector<Vec> offs;
    if (desc.contains("offsets"))
      for (const auto& o : desc.at("offsets")) offs.push_back(to_vec(o));
    else
      offs.assign(1, Vec::Zero(k));
    for (const auto& o : offs)
      if (o.size() != k) throw DomainError("registry: affine offset size mismatch");
    fld.eval = [A, offs, k, d](double, const double* x, int u, int, double* out) {
      const Vec& c = offs[static_cast<size_t>(u) < offs.size() ? u : 0];
      for (int r = 0; r < k; ++r) {
        double acc = c[r];
        for (int cidx = 0; cidx < d; ++cidx) acc += A(r, cidx) * x[cidx];
        out[r] = acc;
      }
    };
  } else if (kind == "affine_uv") {
    const Mat A = desc.contains("A") ? to_mat(desc.at("A"), k, d) : Mat::Zero(k, d);
    // offsets[u][v] is a k-vector
    std::vector<std::vector<Vec>> offs;
    for (const auto& row : desc.at("offsets")) {
      std::vector<Vec> r;
      for (const auto& o : row) r.push_back(to_vec(o));
      offs.push_back(std::move(r));
    }
    fld.eval = [A, offs, k, d](double, const double* x, int u, int v, double* out) {
      const Vec& c = offs[u][v];
      for (int r = 0; r < k; ++r) {
        double acc = c[r];
        for (int cidx = 0; cidx < d; ++cidx) acc += A(r, cidx) * x[cidx];
        out[r] = acc;
      }
    };
  } else if (kind == "abs_bilinear") {
    const double scale = desc.value("scale", 1.0);
    const int coord = desc.value("coord", 0);
    if (coord < 0 || coord >= d)
      throw DomainError("registry: abs_bilinear coord out of range");
    const Vec uv = u_values, vv = v_values;
    fld.eval = [scale, coord, uv, vv, k](double, const double* x, int u, int v,
                                         double* out) {
      out[0] = scale * std::abs(x[coord]) * uv[u] * vv[v];
      for (int o = 1; o < k; ++o) out[o] = 0.0;
    };
  } else if (kind == "abs_sum") {
    const Vec coeffs = to_vec(desc.at("coeffs"));
    const Vec shifts = desc.contains("shifts") ? to_vec(desc.at("shifts"))
                                               : Vec::Zero(coeffs.size());
    const double constant = desc.value("constant", 0.0);
    const double cu = desc.value("cu", 0.0), cv = desc.value("cv", 0.0);
    if (coeffs.size() != d) throw DomainError("registry: abs_sum coeffs size mismatch");
    const Vec uv = u_values, vv = v_values;
    fld.eval = [coeffs, shifts, constant, cu, cv, uv, vv, k, d](
                   double, const double* x, int u, int v, double* out) {
      double acc = constant + cu * uv[u] + cv * vv[v];
      for (int i = 0; i < d; ++i) acc += coeffs[i] * std::abs(x[i] - shifts[i]);
      out[0] = acc;
      for (int o = 1; o < k; ++o) out[o] = 0.0;
    };
  } else if (kind == "linear") {
    const Vec coeffs = to_vec(desc.at("coeffs"));
    const double offset = desc.value("offset", 0.0);
    if (coeffs.size() != d) throw DomainError("registry: linear coeffs size mismatch");
    fld.eval = [coeffs, offset, d](double, const double* x, int, int, double* out) {
      double acc = offset;
      for (int i = 0; i < d; ++i) acc += coeffs[i] * x[i];
      out[0] = acc;
    };
  } else if (kind == "constant") {
    const double value = desc.at("value").get<double>();
    fld.eval = [value, k](double, const double*, int, int, double* out) {
      out[0] = value;
      for (int o = 1; o < k; ++o) out[o] = 0.0;
    };
  } else if (kind == "abs_of_coord") {
    const int i = desc.value("index", 0);
    const double scale = desc.value("scale", 1.0);
    const double center = desc.value("center", 0.0);
    const double offset = desc.value("offset", 0.0);
    if (i < 0 || i >= d) throw DomainError("registry: abs_of_coord index out of range");
    fld.eval = [i, scale, center, offset](double, const double* x, int, int, double* out) {
      out[0] = scale * std::abs(x[i] - center) + offset;
    };
  }
  return fld;
}

} // namespace advoc::registry
