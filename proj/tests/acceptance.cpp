// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure.
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "diffeo/cli.hpp"
#include "diffeo/geometry.hpp"
#include "diffeo/io.hpp"
#include "diffeo/landmarks.hpp"
#include "diffeo/relax.hpp"
#include "diffeo/shoot.hpp"
#include "support.hpp"

using namespace diffeo;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what, double value) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << " " << value << (ok ? "" : " (violated)");
  }
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 = no runtime bound
  std::function<void(Verdict&)> run;
};

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

double drift(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return (*hi - *lo) / *hi;
}

VelocityPath random_path(const Grid& g, int n_time, double amplitude, std::uint64_t seed) {
  VelocityPath u(g, n_time);
  for (int k = 0; k <= n_time; ++k)
    u.frame(k) = diffeo::testing::band_limited_vector(g, 2, seed + 13 * k, amplitude);
  return u;
}

ShootConfig steps(int n) {
  ShootConfig c;
  c.n_steps = n;
  c.snapshot_every = std::max(1, n / 8);
  return c;
}

// ---------------------------------------------------------------- criteria

void geometry_identities(Verdict& v) {
  using namespace diffeo::geometry;
  using V3 = Vec3<double>;
  using M3 = Mat3<double>;
  const auto r = identity_residuals(100, 2024);
  const double worst = std::max({r.conj_homomorphism, r.ad_composition, r.ad_inverse, r.coad_composition,
                                 r.coad_pairing, r.ad_star_pairing, r.ad_antisymmetry, r.norm_mechanism,
                                 r.equivariance_field, r.equivariance_momentum, r.momentum_pairing});
  v.require(worst <= 1e-12, "max identity residual", worst);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  auto rv = [&] { return V3(nd(rng), nd(rng), nd(rng)); };
  double fd_worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const V3 a = rv(), b = rv(), c = rv();
    const auto ur = AlgebraPath<double>::sample([&](double t) { return V3(a + t * b); }, 50);
    const auto dr = AlgebraPath<double>::sample([&](double t) { return V3(c * std::cos(2 * t)); }, 50);
    const int n = 400;
    const double eps = 1e-5;
    const M3 g1 = integrate_group_flow(ur, n).matrix();
    const M3 gp = integrate_group_flow(ur.axpy(eps, dr), n).matrix();
    const M3 gm = integrate_group_flow(ur.axpy(-eps, dr), n).matrix();
    const V3 fd = vee(M3((gp - gm) / (2 * eps) * g1.transpose()));
    const V3 an = flow_variation(ur, dr, n);
    fd_worst = std::max(fd_worst, (an - fd).norm() / fd.norm());
  }
  v.require(fd_worst <= 1e-5, "flow variation rel err", fd_worst);
}

void gradient_check(Verdict& v) {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  MatchConfig cfg;
  cfg.n_time = 8;
  const RelaxProblem problem(pair.moving, pair.fixed, KernelSpec::gaussian(0.125, 2), cfg);
  const VelocityPath u = random_path(pair.grid, 8, 0.01, 7);
  const VelocityPath grad = problem.gradient(u);
  const double eps = 1e-6;
  double worst = 0;
  for (int r = 0; r < 10; ++r) {
    const VelocityPath du = random_path(pair.grid, 8, 1.0, 100 + 17 * r);
    const double an = path_inner(grad, du, problem.kernel());
    const double fd = (problem.evaluate(u + eps * du).energy.total - problem.evaluate(u - eps * du).energy.total) /
                      (2 * eps);
    worst = std::max(worst, std::abs(fd - an) / std::abs(fd));
  }
  v.require(worst <= 1e-4, "max rel err over 10 directions", worst);
}

void conservation(Verdict& v) {
  const auto spec = KernelSpec::gaussian(0.3, 2);
  Eigen::MatrixXd q0(1, 2), p0(1, 2);
  q0 << 0.1, 0.2;
  p0 << 0.7, -1.1;
  const auto tr = landmark_shoot({spec, q0, p0}, 1000);
  double line = 0;
  for (std::size_t s = 0; s < tr.q.size(); ++s) {
    line = std::max(line, (tr.q[s] - (q0 + tr.t[s] * p0)).cwiseAbs().maxCoeff());
    line = std::max(line, (tr.p[s] - p0).cwiseAbs().maxCoeff());
  }
  v.require(line <= 1e-8, "single landmark deviation", line);

  const auto f = diffeo::testing::shoot_fixture();
  std::vector<double> res;
  for (int n : {16, 32, 64}) {
    const Shooter sh(f.spec, f.grid, steps(n));
    res.push_back(max_of(sh.conservation_residual(sh.shoot(f.I0, f.P0))));
  }
  v.require(res[2] <= 2e-2, "grid residual at 64 steps", res[2]);
  v.require(res[0] / res[1] >= 2.0, "ratio 16/32", res[0] / res[1]);
  v.require(res[1] / res[2] >= 2.0, "ratio 32/64", res[1] / res[2]);
}

void norm_constancy(Verdict& v) {
  const auto f = diffeo::testing::shoot_fixture();
  const auto tr = Shooter(f.spec, f.grid, steps(64)).shoot(f.I0, f.P0);
  v.require(drift(tr.norms) <= 0.01, "grid |u|_L^2 drift", drift(tr.norms));

  const auto spec = KernelSpec::gaussian(0.4, 2);
  const auto lt = landmark_shoot({spec, diffeo::testing::random_points(5, 2, 0.5, 3),
                                  diffeo::testing::random_points(5, 2, 1.0, 4)},
                                 1000, false);
  double h = 0;
  for (double e : lt.energy) h = std::max(h, std::abs(e - lt.energy.front()) / lt.energy.front());
  v.require(h <= 1e-8, "landmark H drift", h);
}

void formulation_equivalence(Verdict& v) {
  const auto f = diffeo::testing::shoot_fixture();
  const Shooter sh(f.spec, f.grid, steps(64));
  const auto ip = sh.shoot(f.I0, f.P0);
  const auto ep = sh.shoot_epdiff(sh.momentum(f.I0, f.P0));
  double worst = 0;
  for (std::size_t k = 0; k < ep.m.size(); ++k) {
    const Eigen::MatrixXd m = sh.momentum(ip.states[k].I, ip.states[k].P).values;
    worst = std::max(worst, (ep.m[k].values - m).norm() / m.norm());
  }
  v.require(ep.m.size() == ip.states.size(), "snapshots", double(ep.m.size()));
  v.require(worst <= 1e-3, "max rel L2 difference", worst);
}

void relax_fixture(Verdict& v) {
  const auto pair = diffeo::testing::blob_pair(64, 3, 5);
  const RunConfig run = parse_config(diffeo::testing::data_dir() / "blob.cfg");
  const double h = pair.grid.spacing;
  MatchConfig cfg = run.match;
  cfg.sigma2 = 1e-2;
  cfg.max_iters = 200;
  const auto st = optimize(pair.moving, pair.fixed, cfg, KernelSpec::gaussian(8 * h, 2));
  const double reduction = 1 - st.final_mismatch / st.initial_mismatch;
  v.require(reduction >= 0.9, "mismatch reduction", reduction);
  v.require(st.iterations <= 200, "iterations", st.iterations);
  const double min_det = jacobian_det(st.phi1).det.values.minCoeff();
  v.require(min_det > 0, "min det D phi_1", min_det);
  bool monotone = true;
  for (std::size_t i = 1; i < st.trace.size(); ++i) monotone = monotone && st.trace[i].total < st.trace[i - 1].total;
  v.require(monotone, "monotone trace", monotone);
}

void shoot_fixture_match(Verdict& v) {
  const auto pair = diffeo::testing::blob_pair(64, 3, 5);
  const double h = pair.grid.spacing;
  const auto spec = KernelSpec::gaussian(8 * h, 2);
  ShootMatchConfig cfg;
  cfg.match.sigma2 = 1e-2;
  cfg.match.max_iters = 12;
  const auto r = optimize_P0(pair.moving, pair.fixed, spec, cfg);
  const double reduction = 1 - r.final_mismatch / r.initial_mismatch;
  v.require(reduction >= 0.85, "mismatch reduction", reduction);

  // Lu_0 = -P_0 grad I_0 node-wise
  const Shooter sh(spec, pair.grid);
  const VectorField m = sh.momentum(pair.moving, r.P0), g = Spectral(pair.grid).gradient(pair.moving);
  const double gmax = g.values.rowwise().norm().maxCoeff();
  double wedge = 0;
  for (Index i = 0; i < pair.grid.size(); ++i) {
    const double mn = m.values.row(i).norm(), gn = g.values.row(i).norm();
    if (gn < 1e-2 * gmax || mn == 0) continue;
    wedge = std::max(wedge, std::abs(m.values(i, 0) * g.values(i, 1) - m.values(i, 1) * g.values(i, 0)) / (mn * gn));
  }
  v.require(wedge <= 1e-12, "max sine to grad I0", wedge);
  v.require(max_of(r.residuals) <= 2e-2, "conservation residual", max_of(r.residuals));
}

void quotient_metric_check(Verdict& v) {
  using namespace diffeo::testing;
  const auto spec = KernelSpec::gaussian(0.3, 2);
  const Eigen::MatrixXd q = random_points(5, 2, 0.5, 5), U = random_points(5, 2, 1.0, 6);
  const double g = quotient_metric(spec, q, U);
  const double lift = horizontal_lift(spec, q, U).norm2();
  v.require(std::abs(lift - g) <= 1e-10 * g, "lift vs metric rel diff", std::abs(lift - g) / g);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ud(-1, 1);
  double best = INFINITY, below = 0;
  for (int s = 0; s < 10000; ++s) {
    const double scale = std::pow(10.0, -4 * double(s % 100) / 99);
    Eigen::MatrixXd w(6, 2);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = scale * ud(rng);
    const KernelField X = random_lift(spec, q, U, random_points(6, 2, 0.8, 1000 + s), w);
    const double n2 = h_inner(spec, X, X);
    best = std::min(best, n2);
    below = std::max(below, g - n2);
  }
  // sampling slack: the smallest lift perturbation has weight 1e-4
  v.require(below <= 1e-10 * g, "largest undercut (rel)", below / g);
  v.require(best - g <= 1e-3 * g, "best sample excess (rel)", (best - g) / g);
}

void admissibility(Verdict& v) {
  const bool rough = admissibility_report(KernelSpec::sobolev(0.1, 1, 3)).pass;
  const bool smooth = admissibility_report(KernelSpec::sobolev(0.1, 3, 3)).pass;
  v.require(!rough, "sobolev s=1 d=3 accepted", rough);
  v.require(smooth, "sobolev s=3 d=3 accepted", smooth);
  double worst = INFINITY;
  for (int c = 0; c < 50; ++c) {
    const int d = 1 + c % 3;
    const auto spec = c % 2 ? KernelSpec::gaussian(0.2, d) : KernelSpec::sobolev(0.2, 3, d);
    const Eigen::MatrixXd k = kernel_matrix(spec, diffeo::testing::random_points(12, d, 1.0, 100 + c));
    const double n = double(k.rows());
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff();
    worst = std::min(worst, lo / (k.trace() / n));
  }
  v.require(worst >= -1e-10, "min eigenvalue / (trace/N)", worst);
}

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"diffeo-match"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(int(argv.size()), argv.data(), out, err);
}

void determinism(Verdict& v) {
  const fs::path dir = diffeo::testing::scratch_dir("acceptance-determinism");
  auto data = [](const char* n) { return (diffeo::testing::data_dir() / n).string(); };
  bool same = true;
  for (const char* run : {"a", "b"}) {
    const int relax = cli({"register-relax", "--config", data("blob.cfg"), "--fixed", data("blob_fixed.pgm"),
                           "--moving", data("blob_moving.pgm"), "--set", "max_iters=10", "--out",
                           (dir / run / "relax").string()});
    const int lm = cli({"landmarks", "--config", data("landmarks.cfg"), "--points", data("square_src.csv"),
                        "--targets", data("square_dst.csv"), "--out", (dir / run / "landmarks").string()});
    v.require(relax == kExitOk && lm == kExitOk, std::string("exit codes run ") + run, relax + lm);
  }
  int files = 0;
  for (const char* f : {"relax/energy.csv", "landmarks/trajectory.csv", "landmarks/momentum.csv",
                        "landmarks/energy.csv"}) {
    same = same && read_file(dir / "a" / f) == read_file(dir / "b" / f);
    ++files;
  }
  v.require(same, "identical CSVs", files);
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "geometry identities", 5, geometry_identities},
      {2, "image energy gradient vs finite differences", 60, gradient_check},
      {3, "momentum conservation", 120, conservation},
      {4, "norm constancy", 0, norm_constancy},
      {5, "EPDiff vs image shooting", 0, formulation_equivalence},
      {6, "relaxation fixture", 300, relax_fixture},
      {7, "shooting fixture", 0, shoot_fixture_match},
      {8, "quotient metric", 0, quotient_metric_check},
      {9, "admissibility gate", 0, admissibility},
      {10, "determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << (v.detail.tellp() > 0 ? "; " : "") << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0) v.require(secs < c.budget_s, "seconds (budget " + std::to_string(int(c.budget_s)) + ")", secs);
    else v.detail << "; seconds " << secs;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << v.detail.str()
              << std::endl;
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
