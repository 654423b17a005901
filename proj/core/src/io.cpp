#include "advoc/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "advoc/errors.hpp"
#include "advoc/registry.hpp"

namespace advoc::io {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using problem::ProblemSpec;
using solver::NCCertificate;

namespace {

Vec to_vec(const json& arr) {
  if (!arr.is_array()) throw DomainError("io: expected an array of numbers");
  Vec v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
  return v;
}

ordered_json from_vec(const Vec& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Mat to_mat(const json& arr) {
  if (!arr.is_array() || arr.empty()) throw DomainError("io: expected a matrix");
  const size_t rows = arr.size(), cols = arr[0].size();
  Mat m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (arr[r].size() != cols) throw DomainError("io: ragged matrix");
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = arr[r][c];
  }
  return m;
}

ordered_json from_mat(const Mat& m) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    arr.push_back(row);
  }
  return arr;
}

double profile_value(const json& doc, const char* key) {
  const json& p = doc.at(key);
  if (p.is_number()) return p.get<double>();
  if (p.is_object() && p.contains("value")) return p.at("value").get<double>();
  throw DomainError(std::string("io: ") + key + " must be a number");
}

std::string mode_to_string(adjoint::Mode mode) {
  return mode == adjoint::Mode::hyperrelaxed ? "hyperrelaxed" : "relaxed";
}

adjoint::Mode mode_from_string(const std::string& s) {
  if (s == "hyperrelaxed") return adjoint::Mode::hyperrelaxed;
  if (s == "relaxed") return adjoint::Mode::relaxed;
  throw DomainError("io: unknown mode: " + s);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("io: cannot write " + path.string());
  out << content;
}

} // namespace

ProblemSpec load_problem(const json& doc) {
  ProblemSpec s;
  s.name = doc.at("name").get<std::string>();
  s.n = doc.at("n").get<int>();
  s.m = doc.at("m").get<int>();
  if (s.n < 1 || s.m < 0) throw DomainError("io: state dimensions must be positive");
  if (s.joint_dim() > 3)
    throw DomainError("io: joint state dimension above 3 is not supported");

  const json& horizon = doc.at("horizon");
  if (!horizon.is_array() || horizon.size() != 2)
    throw DomainError("io: horizon must be [t0, t1]");
  s.t0 = horizon[0];
  s.t1 = horizon[1];
  if (!(s.t1 > s.t0)) throw DomainError("io: horizon must have t1 > t0");

  auto grid = [](const json& arr) {
    auto g = std::make_shared<controls::ControlGrid>();
    g->points = to_vec(arr);
    if (g->points.size() == 0) throw DomainError("io: empty control grid");
    return g;
  };
  s.u_grid = grid(doc.at("u_grid"));
  s.v_grid = grid(doc.at("v_grid"));

  auto box = [](const json& b, int dim, const char* which) {
    Vec lo = to_vec(b.at("lo")), hi = to_vec(b.at("hi"));
    if (lo.size() != dim || hi.size() != dim)
      throw DomainError(std::string("io: ") + which + " box dimension mismatch");
    for (int i = 0; i < dim; ++i)
      if (lo[i] > hi[i])
        throw DomainError(std::string("io: ") + which + " box has lo > hi");
    return std::make_pair(lo, hi);
  };
  std::tie(s.b_lo, s.b_hi) = box(doc.at("initial_box"), s.n, "initial");
  if (s.m > 0) {
    std::tie(s.bt_lo, s.bt_hi) = box(doc.at("initial_box_tilde"), s.m, "adversary");
  } else {
    s.bt_lo.resize(0);
    s.bt_hi.resize(0);
  }

  const json& dom = doc.at("domain");
  const Vec dom_lo = to_vec(dom.at("lo")), dom_hi = to_vec(dom.at("hi"));
  if (dom_lo.size() != s.joint_dim() || dom_hi.size() != s.joint_dim())
    throw DomainError("io: domain box must have dimension n + m");
  const double collar = dom.at("collar").get<double>();
  if (!(collar > 0.0)) throw DomainError("io: domain collar must be positive");

  const double psi_c = profile_value(doc, "psi");
  const double chi_c = profile_value(doc, "chi");
  if (psi_c < 0.0 || chi_c < 0.0)
    throw DomainError("io: psi and chi must be nonnegative");
  s.psi = [psi_c](double) { return psi_c; };
  s.chi = [chi_c](double) { return chi_c; };
  s.sup_psi = psi_c;

  const Vec& up = s.u_grid->points;
  const Vec& vp = s.v_grid->points;
  s.f = registry::make_field(doc.at("f"), s.n, s.n, dom_lo.head(s.n),
                             dom_hi.head(s.n), collar, up, vp);
  s.f_tilde = registry::make_field(doc.at("f_tilde"), s.joint_dim(), s.m, dom_lo,
                                   dom_hi, collar, up, vp);
  s.h0 = registry::make_field(doc.at("h0"), s.n, 1, dom_lo.head(s.n),
                              dom_hi.head(s.n), collar, up, vp);
  if (doc.contains("h1")) {
    s.h1 = registry::make_field(doc.at("h1"), s.n, 1, dom_lo.head(s.n),
                                dom_hi.head(s.n), collar, up, vp);
    s.has_h1 = true;
  }
  if (doc.contains("h_hat")) {
    s.h_hat = registry::make_field(doc.at("h_hat"), s.joint_dim(), 1, dom_lo,
                                   dom_hi, collar, up, vp);
    s.has_h_hat = true;
  }

  int nodes_n = 0, nodes_joint = 0;
  if (doc.contains("kernel_nodes")) {
    nodes_n = doc.at("kernel_nodes").value("n", 0);
    nodes_joint = doc.at("kernel_nodes").value("joint", 0);
  }
  s.finalize(nodes_n, nodes_joint);
  return s;
}

ProblemSpec load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("io: cannot open problem file: " + path);
  json doc = json::parse(in); // throws json::parse_error on malformed input
  return load_problem(doc);
}

void RunConfig::check() const {
  if (j_seq.empty()) throw DomainError("run config: empty j sequence");
  for (size_t i = 0; i < j_seq.size(); ++i) {
    if (j_seq[i] < 1) throw DomainError("run config: j must be >= 1");
    if (i > 0 && j_seq[i] <= j_seq[i - 1])
      throw DomainError("run config: j sequence must be strictly increasing");
  }
  if (n_steps < 10) throw DomainError("run config: n_steps must be >= 10");
}

solver::SolveConfig RunConfig::solve_config() const {
  solver::SolveConfig sc;
  sc.mode = mode;
  sc.n_steps = n_steps;
  sc.tol_exchange = tol_exchange;
  sc.seed = seed;
  return sc;
}

namespace {

ordered_json policy_to_json(const controls::FiberPolicy& pi) {
  ordered_json steps = ordered_json::array();
  for (const Mat& w : pi.weights) steps.push_back(from_mat(w));
  return steps;
}

controls::FiberPolicy policy_from_json(const json& arr,
                                       std::shared_ptr<const controls::ControlGrid> ug,
                                       std::shared_ptr<const controls::ControlGrid> vg) {
  controls::FiberPolicy pi;
  pi.u_grid = std::move(ug);
  pi.v_grid = std::move(vg);
  for (const json& step : arr) pi.weights.push_back(to_mat(step));
  return pi;
}

} // namespace

ordered_json certificate_to_json(const NCCertificate& cert) {
  ordered_json doc;
  doc["problem"] = cert.problem_name;
  doc["mode"] = mode_to_string(cert.mode);
  doc["status"] = cert.status;
  doc["flag_reason"] = cert.flag_reason;
  doc["value"] = cert.value;
  doc["j_sequence"] = cert.j_seq;
  doc["n_steps"] = cert.n_steps;

  ordered_json mult;
  mult["l0"] = cert.multipliers.l0;
  mult["l1"] = cert.multipliers.l1;
  ordered_json omega = ordered_json::array();
  for (size_t a = 0; a < cert.multipliers.omega.size(); ++a) {
    ordered_json atom;
    atom["weight"] = cert.multipliers.omega[a].weight;
    atom["policy"] = policy_to_json(cert.multipliers.omega[a].policy);
    atom["H_hat"] = from_vec(cert.multipliers.H_hat_per_atom[a]);
    omega.push_back(atom);
  }
  mult["omega"] = omega;
  mult["H0"] = from_vec(cert.multipliers.H0);
  mult["H1"] = from_vec(cert.multipliers.H1);
  mult["lambda"] = from_vec(cert.multipliers.lambda);
  doc["multipliers"] = mult;

  ordered_json res;
  res["min_condition"] = cert.residuals.min_condition;
  res["fiber_condition"] = cert.residuals.fiber_condition;
  res["active_constraint"] = cert.residuals.active_constraint;
  res["transversality"] = cert.residuals.transversality;
  doc["residuals"] = res;

  if (cert.sigma_bar.grid != nullptr) {
    doc["u_points"] = from_vec(cert.sigma_bar.grid->points);
    doc["sigma_bar"] = from_mat(cert.sigma_bar.weights);
  } else {
    doc["u_points"] = ordered_json::array();
    doc["sigma_bar"] = ordered_json::array();
  }
  Vec v_points;
  for (const auto& atom : cert.multipliers.omega)
    if (atom.policy.v_grid != nullptr) v_points = atom.policy.v_grid->points;
  doc["v_points"] = from_vec(v_points);

  ordered_json hist = ordered_json::array();
  for (const solver::JRecord& r : cert.j_history) {
    ordered_json row;
    row["j"] = r.j;
    row["solved"] = r.solved;
    row["l0"] = r.l0;
    row["l1"] = r.l1;
    row["omega_mass"] = r.omega_mass;
    row["value"] = r.value;
    row["min_residual"] = r.residuals.min_condition;
    row["fiber_residual"] = r.residuals.fiber_condition;
    row["active_residual"] = r.residuals.active_constraint;
    row["transversality_residual"] = r.residuals.transversality;
    row["sup_Z"] = r.sup_Z;
    row["gronwall_bound"] = r.gronwall;
    row["n_atoms"] = r.n_atoms;
    row["note"] = r.note;
    hist.push_back(row);
  }
  doc["j_history"] = hist;
  doc["adjoint_increments"] = cert.adjoint_increments;
  doc["multiplier_increments"] = cert.multiplier_increments;
  ordered_json nc;
  nc["adjoint"] = cert.non_cauchy_adjoint;
  nc["multiplier"] = cert.non_cauchy_multiplier;
  doc["non_cauchy"] = nc;
  return doc;
}

NCCertificate certificate_from_json(const json& doc) {
  NCCertificate cert;
  cert.problem_name = doc.at("problem").get<std::string>();
  cert.mode = mode_from_string(doc.at("mode").get<std::string>());
  cert.status = doc.at("status").get<std::string>();
  cert.flag_reason = doc.at("flag_reason").get<std::string>();
  cert.value = doc.at("value").get<double>();
  cert.j_seq = doc.at("j_sequence").get<std::vector<int>>();
  cert.n_steps = doc.at("n_steps").get<int>();

  auto u_grid = std::make_shared<controls::ControlGrid>();
  u_grid->points = to_vec(doc.at("u_points"));
  auto v_grid = std::make_shared<controls::ControlGrid>();
  v_grid->points = to_vec(doc.at("v_points"));

  const json& mult = doc.at("multipliers");
  cert.multipliers.mode = cert.mode;
  cert.multipliers.l0 = mult.at("l0").get<double>();
  cert.multipliers.l1 = mult.at("l1").get<double>();
  for (const json& atom : mult.at("omega")) {
    adjoint::OmegaAtom oa;
    oa.weight = atom.at("weight").get<double>();
    oa.policy = policy_from_json(atom.at("policy"), u_grid, v_grid);
    cert.multipliers.omega.push_back(std::move(oa));
    cert.multipliers.H_hat_per_atom.push_back(to_vec(atom.at("H_hat")));
  }
  cert.multipliers.H0 = to_vec(mult.at("H0"));
  cert.multipliers.H1 = to_vec(mult.at("H1"));
  cert.multipliers.lambda = to_vec(mult.at("lambda"));

  const json& res = doc.at("residuals");
  cert.residuals.min_condition = res.at("min_condition").get<double>();
  cert.residuals.fiber_condition = res.at("fiber_condition").get<double>();
  cert.residuals.active_constraint = res.at("active_constraint").get<double>();
  cert.residuals.transversality = res.at("transversality").get<double>();

  if (!doc.at("sigma_bar").empty()) {
    cert.sigma_bar.weights = to_mat(doc.at("sigma_bar"));
    cert.sigma_bar.grid = u_grid;
  }

  for (const json& row : doc.at("j_history")) {
    solver::JRecord r;
    r.j = row.at("j").get<int>();
    r.solved = row.at("solved").get<bool>();
    r.l0 = row.at("l0").get<double>();
    r.l1 = row.at("l1").get<double>();
    r.omega_mass = row.at("omega_mass").get<double>();
    r.value = row.at("value").get<double>();
    r.residuals.min_condition = row.at("min_residual").get<double>();
    r.residuals.fiber_condition = row.at("fiber_residual").get<double>();
    r.residuals.active_constraint = row.at("active_residual").get<double>();
    r.residuals.transversality = row.at("transversality_residual").get<double>();
    r.sup_Z = row.at("sup_Z").get<double>();
    r.gronwall = row.at("gronwall_bound").get<double>();
    r.n_atoms = row.at("n_atoms").get<int>();
    r.note = row.at("note").get<std::string>();
    cert.j_history.push_back(std::move(r));
  }
  cert.adjoint_increments = doc.at("adjoint_increments").get<std::vector<double>>();
  cert.multiplier_increments =
      doc.at("multiplier_increments").get<std::vector<double>>();
  cert.non_cauchy_adjoint = doc.at("non_cauchy").at("adjoint").get<bool>();
  cert.non_cauchy_multiplier = doc.at("non_cauchy").at("multiplier").get<bool>();
  return cert;
}

ordered_json validation_to_json(const problem::ValidationReport& report) {
  ordered_json doc;
  doc["passed_all"] = report.passed_all;
  ordered_json entries = ordered_json::array();
  for (const problem::ValidationEntry& e : report.entries) {
    ordered_json row;
    row["name"] = e.name;
    row["passed"] = e.passed;
    row["worst_ratio"] = e.worst_ratio;
    row["detail"] = e.detail;
    entries.push_back(row);
  }
  doc["entries"] = entries;
  return doc;
}

std::string convergence_csv(const NCCertificate& cert) {
  std::string out =
      "j,l0,l1_norm,omega_mass,min_residual,fiber_residual,active_residual\n";
  for (const solver::JRecord& r : cert.j_history) {
    if (!r.solved) continue;
    out += std::to_string(r.j) + "," + fmt(r.l0) + "," + fmt(std::abs(r.l1)) + "," +
           fmt(r.omega_mass) + "," + fmt(r.residuals.min_condition) + "," +
           fmt(r.residuals.fiber_condition) + "," +
           fmt(r.residuals.active_constraint) + "\n";
  }
  return out;
}

std::string trajectory_csv(const trajectory::Trajectory& traj) {
  std::string out = "t";
  for (Eigen::Index c = 0; c < traj.states.cols(); ++c)
    out += ",x" + std::to_string(c);
  out += "\n";
  for (Eigen::Index r = 0; r < traj.states.rows(); ++r) {
    out += fmt(traj.times[r]);
    for (Eigen::Index c = 0; c < traj.states.cols(); ++c)
      out += "," + fmt(traj.states(r, c));
    out += "\n";
  }
  return out;
}

int run_cli(const RunConfig& rc) {
  ProblemSpec spec;
  try {
    rc.check();
    spec = load_problem_file(rc.problem_path);
  } catch (const std::exception& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  }

  try {
    std::filesystem::create_directories(rc.out_dir);
    const std::filesystem::path out(rc.out_dir);

    const problem::ValidationReport validation = problem::validate(spec);
    write_file(out / "validation.json", validation_to_json(validation).dump(1) + "\n");
    if (!validation.passed_all) {
      std::cerr << "hypothesis validation failed, see "
                << (out / "validation.json").string() << "\n";
      return 3;
    }

    const auto [norm, rescale] = problem::normalize_time(spec);
    NCCertificate cert;
    try {
      cert = solver::run_j_sweep(norm, rc.j_seq, rc.solve_config());
    } catch (const std::exception& e) {
      cert.problem_name = norm.name;
      cert.mode = rc.mode;
      cert.j_seq = rc.j_seq;
      cert.n_steps = rc.n_steps;
      cert.status = "flagged";
      cert.flag_reason = std::string("solver error: ") + e.what();
    }

    write_file(out / "certificate.json", certificate_to_json(cert).dump(1) + "\n");
    write_file(out / "convergence.csv", convergence_csv(cert));
    if (cert.sigma_bar.grid != nullptr && cert.sigma_bar.weights.size() > 0) {
      const trajectory::Trajectory y = trajectory::integrate_relaxed(
          norm, cert.sigma_bar, norm.b_mid(), rc.n_steps);
      write_file(out / "trajectory.csv", trajectory_csv(y));
    }

    std::cout << "problem: " << cert.problem_name << "\n"
              << "status:  " << cert.status
              << (cert.flag_reason.empty() ? "" : " (" + cert.flag_reason + ")") << "\n"
              << "value:   " << fmt(cert.value) << "\n";
    return cert.status == "certified" ? 0 : 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

int report_cli(const std::string& path) {
  NCCertificate cert;
  try {
    std::filesystem::path p(path);
    if (std::filesystem::is_directory(p)) p /= "certificate.json";
    std::ifstream in(p);
    if (!in) throw DomainError("io: cannot open certificate: " + p.string());
    cert = certificate_from_json(json::parse(in));
  } catch (const std::exception& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  }

  std::cout << "problem:        " << cert.problem_name << "\n"
            << "mode:           " << mode_to_string(cert.mode) << "\n"
            << "status:         " << cert.status << "\n";
  if (!cert.flag_reason.empty())
    std::cout << "reason:         " << cert.flag_reason << "\n";
  std::cout << "value:          " << fmt(cert.value) << "\n"
            << "multipliers:    l0=" << fmt(cert.multipliers.l0)
            << " l1=" << fmt(cert.multipliers.l1)
            << " omega_mass=" << fmt(cert.multipliers.omega_mass()) << "\n"
            << "residuals:      min=" << fmt(cert.residuals.min_condition)
            << " fiber=" << fmt(cert.residuals.fiber_condition)
            << " active=" << fmt(cert.residuals.active_constraint)
            << " transversality=" << fmt(cert.residuals.transversality) << "\n";
  std::cout << "levels:\n";
  bool any_solved = false;
  for (const solver::JRecord& r : cert.j_history) {
    std::cout << "  j=" << r.j << (r.solved ? "" : "  [failed: " + r.note + "]");
    if (r.solved) {
      any_solved = true;
      std::cout << "  value=" << fmt(r.value) << "  l0=" << fmt(r.l0)
                << "  omega=" << fmt(r.omega_mass)
                << "  min_res=" << fmt(r.residuals.min_condition);
      if (!r.note.empty()) std::cout << "  [" << r.note << "]";
    }
    std::cout << "\n";
  }
  if (!any_solved) {
    std::cerr << "empty certificate: no solved levels\n";
    return 1;
  }
  return cert.status == "certified" ? 0 : 1;
}

} // namespace advoc::io
