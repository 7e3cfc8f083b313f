#include "diffeo/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>

#include "diffeo/geometry.hpp"
#include "diffeo/io.hpp"

namespace diffeo {

namespace fs = std::filesystem;

namespace {

/// Bad invocation or input; maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config;
  std::vector<std::string> settings;
  std::string out;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "key = value run configuration");
  sub->add_option("--set", o.settings, "override one config entry, key=value (repeatable)");
  sub->add_option("--out", o.out, "output directory");
}

RunConfig load_config(const CommonOptions& o, Solver solver) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : parse_config(o.config);
  for (const std::string& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    auto strip = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t"));
      v.erase(v.find_last_not_of(" \t") + 1);
      return v;
    };
    apply_setting(cfg, strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
  }
  if (!o.out.empty()) cfg.out = o.out;
  cfg.solver = solver;
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw UsageError("an output directory is required (--out)");
  fs::create_directories(cfg.out);
  write_file_atomic(fs::path(cfg.out) / "config.cfg", serialize_config(cfg));
  return fs::path(cfg.out);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required input ") + flag);
}

Image load_image(const std::string& path, const RunConfig& cfg) {
  Image img;
  if (fs::path(path).extension() == ".raw") {
    RawGrid r = read_raw_grid(path);
    if (r.arity != 1) throw FormatError(path + ": expected a scalar raw grid");
    if (cfg.grid_spacing > 0) r.grid.spacing = cfg.grid_spacing;
    img = Image(r.grid, r.values.col(0));
  } else {
    img = read_pgm(path, cfg.grid_spacing);
  }
  if (cfg.presmooth > 0) img = gaussian_smooth(img, cfg.presmooth);
  return img;
}

void save_image(const fs::path& stem, const Image& img) {
  write_raw_grid(stem.string() + ".raw", img.grid, img.values);
  if (img.grid.dim == 2) write_pgm(stem.string() + ".pgm", img);
}

std::string csv_row(std::initializer_list<std::string> fields) {
  std::string s;
  for (const auto& f : fields) {
    if (!s.empty()) s += ',';
    s += f;
  }
  return s + "\n";
}

std::string num(double v) { return format_double(v); }

std::string step_name(const char* prefix, int k) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << k;
  return os.str();
}

// ---------------------------------------------------------------- commands

struct ImagePair {
  std::string fixed, moving;
};

void add_images(CLI::App* sub, ImagePair& p) {
  sub->add_option("--fixed", p.fixed, "target image (PGM or scalar raw grid)");
  sub->add_option("--moving", p.moving, "source image deformed onto the target");
}

std::pair<Image, Image> load_pair(RunConfig& cfg, const ImagePair& p) {
  if (!p.fixed.empty()) cfg.fixed = p.fixed;
  if (!p.moving.empty()) cfg.moving = p.moving;
  cfg.validate();
  require(cfg.fixed, "--fixed");
  require(cfg.moving, "--moving");
  cfg.require_inputs();
  Image fixed = load_image(cfg.fixed, cfg);
  Image moving = load_image(cfg.moving, cfg);
  if (fixed.grid != moving.grid) throw UsageError("fixed and moving images differ in size");
  cfg.kernel.dim = fixed.grid.dim;
  return {std::move(fixed), std::move(moving)};
}

int register_relax(const CommonOptions& o, const ImagePair& p, std::ostream& out,
                   std::ostream& err) {
  RunConfig cfg = load_config(o, Solver::relax);
  auto [fixed, moving] = load_pair(cfg, p);
  const fs::path dir = prepare_out(cfg);
  const RelaxState st = optimize(moving, fixed, cfg.match, cfg.kernel);

  std::string csv = "iter,kinetic,mismatch,total,step\n";
  for (const EnergyRecord& r : st.trace)
    csv += csv_row({std::to_string(r.iter), num(r.kinetic), num(r.mismatch), num(r.total),
                    num(r.step)});
  write_file_atomic(dir / "energy.csv", csv);
  write_raw_grid(dir / "phi1.raw", st.phi1.grid, st.phi1.positions);
  write_raw_grid(dir / "phi1_inv.raw", st.phi1_inv.grid, st.phi1_inv.positions);
  save_image(dir / "warped", st.warped);

  out << "iterations " << st.iterations << "\n"
      << "initial_mismatch " << num(st.initial_mismatch) << "\n"
      << "final_mismatch " << num(st.final_mismatch) << "\n"
      << "status " << st.message << "\n";
  if (st.line_search_failed) err << "warning: " << st.message << "; outputs hold the last accepted state\n";
  return kExitOk;
}

struct ShootFlags {
  int p0_basis = 0;
  double filter = -1;
};

int register_shoot(const CommonOptions& o, const ImagePair& p, const ShootFlags& f,
                   std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(o, Solver::shoot);
  if (f.p0_basis > 0) cfg.p0_basis = f.p0_basis;
  if (f.filter >= 0) cfg.shoot.filter = f.filter;
  auto [fixed, moving] = load_pair(cfg, p);
  const fs::path dir = prepare_out(cfg);
  const ShootMatchResult r = optimize_P0(moving, fixed, cfg.kernel, cfg.shoot_match());

  write_raw_grid(dir / "p0.raw", r.P0.grid, r.P0.values);
  std::string energy = "iter,total\n";
  for (size_t k = 0; k < r.trace.size(); ++k)
    energy += csv_row({std::to_string(k), num(r.trace[k])});
  write_file_atomic(dir / "energy.csv", energy);

  const auto& traj = r.trajectory;
  const int n = cfg.shoot.n_steps;
  std::string cons = "t,residual,norm\n";
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const ShootState& s = traj.states[k];
    const int step = int(std::lround(s.t * n));
    Eigen::MatrixXd ip(s.I.values.size(), 2);
    ip << s.I.values, s.P.values;
    write_raw_grid(dir / (step_name("snapshot_", step) + ".raw"), s.I.grid, ip);
    cons += csv_row({num(s.t), num(k < r.residuals.size() ? r.residuals[k] : 0.0),
                     num(traj.norms[size_t(step)])});
  }
  write_file_atomic(dir / "conservation.csv", cons);
  save_image(dir / "warped", traj.states.back().I);

  double worst = 0;
  for (double v : r.residuals) worst = std::max(worst, v);
  out << "active_coefficients " << r.active_coefficients << "\n"
      << "iterations " << r.iterations << "\n"
      << "initial_mismatch " << num(r.initial_mismatch) << "\n"
      << "final_mismatch " << num(r.final_mismatch) << "\n"
      << "max_conservation_residual " << num(worst) << "\n"
      << "status " << r.message << "\n";
  if (r.line_search_failed) err << "warning: " << r.message << "; outputs hold the best iterate\n";
  return kExitOk;
}

struct PointFlags {
  std::string points, targets;
};

int landmarks(const CommonOptions& o, const PointFlags& f, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(o, Solver::landmarks);
  if (!f.points.empty()) cfg.points = f.points;
  if (!f.targets.empty()) cfg.targets = f.targets;
  cfg.validate();
  require(cfg.points, "--points");
  require(cfg.targets, "--targets");
  cfg.require_inputs();
  const PointSet src = read_points_csv(cfg.points);
  const PointSet dst = read_points_csv(cfg.targets);
  if (src.points.rows() != dst.points.rows() || src.points.cols() != dst.points.cols())
    throw UsageError("points and targets differ in count or dimension");
  cfg.kernel.dim = int(src.points.cols());
  cfg.kernel.validate();
  const fs::path dir = prepare_out(cfg);
  const LandmarkMatchResult r =
      landmark_match(src.points, dst.points, cfg.kernel, cfg.landmark_match());

  const int d = int(src.points.cols());
  const char* axes[] = {"x", "y", "z"};
  const char* moms[] = {"px", "py", "pz"};
  std::string head = "step,t,id";
  for (int a = 0; a < d; ++a) head += std::string(",") + axes[a];
  for (int a = 0; a < d; ++a) head += std::string(",") + moms[a];
  std::string traj = head + "\n";
  const auto& tr = r.trajectory;
  for (size_t k = 0; k < tr.t.size(); ++k)
    for (Index i = 0; i < src.points.rows(); ++i) {
      std::string row = std::to_string(k) + "," + num(tr.t[k]) + "," + src.ids[size_t(i)];
      for (int a = 0; a < d; ++a) row += "," + num(tr.q[k](i, a));
      for (int a = 0; a < d; ++a) row += "," + num(tr.p[k](i, a));
      traj += row + "\n";
    }
  write_file_atomic(dir / "trajectory.csv", traj);

  std::string mom = "id";
  for (int a = 0; a < d; ++a) mom += std::string(",") + moms[a];
  mom += "\n";
  for (Index i = 0; i < r.p0.rows(); ++i) {
    std::string row = src.ids[size_t(i)];
    for (int a = 0; a < d; ++a) row += "," + num(r.p0(i, a));
    mom += row + "\n";
  }
  write_file_atomic(dir / "momentum.csv", mom);
  std::string energy = "iter,total\n";
  for (size_t k = 0; k < r.trace.size(); ++k)
    energy += csv_row({std::to_string(k), num(r.trace[k])});
  write_file_atomic(dir / "energy.csv", energy);

  out << "iterations " << r.iterations << "\n"
      << "kinetic " << num(r.kinetic) << "\n"
      << "endpoint_error " << num(r.endpoint_error) << "\n"
      << "status " << r.message << "\n";
  if (r.line_search_failed) err << "warning: " << r.message << "; outputs hold the best iterate\n";
  return kExitOk;
}

struct EpdiffFlags {
  int n = 64;
  int dim = 2;
  double speed = 3;
};

int simulate_epdiff(const CommonOptions& o, const EpdiffFlags& f, std::ostream& out) {
  RunConfig cfg = load_config(o, Solver::shoot);
  if (f.n < 8) throw UsageError("--n must be >= 8");
  if (f.dim < 1 || f.dim > 3) throw UsageError("--dim must be 1, 2 or 3");
  if (!(f.speed > 0)) throw UsageError("--speed must be > 0");
  cfg.kernel.dim = f.dim;
  cfg.validate();
  const fs::path dir = prepare_out(cfg);
  const double h = cfg.grid_spacing > 0 ? cfg.grid_spacing : 1.0 / f.n;
  const Grid g = Grid::square(f.dim, f.n, h);
  const double L = g.length(0);

  // smooth random momentum from the lowest Fourier modes
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  VectorField m0(g);
  const int kmax = 3;
  std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < f.dim; ++a) lo[a] = -kmax, hi[a] = kmax;
  for (int k0 = lo[0]; k0 <= hi[0]; ++k0)
    for (int k1 = lo[1]; k1 <= hi[1]; ++k1)
      for (int k2 = lo[2]; k2 <= hi[2]; ++k2) {
        for (int c = 0; c < f.dim; ++c) {
          const double amp = normal(rng), phase = normal(rng);
          for (Index i = 0; i < g.size(); ++i) {
            const auto idx = g.unravel(i);
            const double arg = 2 * std::numbers::pi * (k0 * idx[0] + k1 * idx[1] + k2 * idx[2]) * h / L;
            m0.values(i, c) += amp * std::cos(arg + phase);
          }
        }
      }
  Shooter sh(cfg.kernel, g, cfg.shoot);
  const double umax = sh.kernel().apply_K(m0).values.rowwise().norm().maxCoeff();
  if (umax > 0) m0.values *= f.speed * h / umax;

  const EpdiffTrajectory tr = sh.shoot_epdiff(m0);
  const std::vector<double> res = sh.conservation_residual(tr);
  const int n = cfg.shoot.n_steps;
  std::string cons = "t,residual,norm\n";
  for (size_t k = 0; k < tr.m.size(); ++k) {
    const int step = int(std::lround(tr.t[k] * n));
    write_raw_grid(dir / (step_name("momentum_", step) + ".raw"), g, tr.m[k].values);
    cons += csv_row({num(tr.t[k]), num(res[k]), num(tr.norms[size_t(step)])});
  }
  write_file_atomic(dir / "conservation.csv", cons);
  double worst = 0;
  for (double v : res) worst = std::max(worst, v);
  const double drift = (tr.norms.back() - tr.norms.front()) / tr.norms.front();
  out << "max_conservation_residual " << num(worst) << "\n"
      << "norm_drift " << num(drift) << "\n";
  return kExitOk;
}

struct WarpFlags {
  std::string deformation;
  std::string out;
  int pitch = 8;
};

int warp_grid(const WarpFlags& f, std::ostream& out) {
  require(f.deformation, "--deformation");
  require(f.out, "--out");
  if (f.pitch < 2) throw UsageError("--pitch must be >= 2");
  if (!fs::exists(f.deformation)) throw UsageError("deformation file does not exist: " + f.deformation);
  const RawGrid r = read_raw_grid(f.deformation);
  if (r.arity != r.grid.dim) throw FormatError("deformation must have one component per axis");
  const Grid& g = r.grid;
  // lattice lines one node wide every `pitch` nodes
  Image lattice(g);
  for (Index i = 0; i < g.size(); ++i) {
    const auto idx = g.unravel(i);
    bool line = false;
    for (int a = 0; a < g.dim; ++a) line |= idx[a] % f.pitch == 0;
    lattice[i] = line ? 1.0 : 0.0;
  }
  const Image warped = deform_image(lattice, DeformationField{g, r.values});
  const fs::path target(f.out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  if (target.extension() == ".pgm") {
    write_pgm(target, warped);
  } else {
    write_raw_grid(target, g, warped.values);
  }
  out << "wrote " << target.string() << "\n";
  return kExitOk;
}

struct GeometryFlags {
  int draws = 100;
  unsigned seed = 0;
};

int check_geometry(const GeometryFlags& f, std::ostream& out) {
  if (f.draws < 1) throw UsageError("--draws must be >= 1");
  const auto r = geometry::identity_residuals(f.draws, f.seed);
  const std::pair<const char*, double> rows[] = {
      {"conj_homomorphism", r.conj_homomorphism},
      {"ad_composition", r.ad_composition},
      {"ad_inverse", r.ad_inverse},
      {"coad_composition", r.coad_composition},
      {"coad_pairing", r.coad_pairing},
      {"ad_star_pairing", r.ad_star_pairing},
      {"ad_antisymmetry", r.ad_antisymmetry},
      {"norm_mechanism", r.norm_mechanism},
      {"equivariance_field", r.equivariance_field},
      {"equivariance_momentum", r.equivariance_momentum},
      {"momentum_pairing", r.momentum_pairing},
  };
  out << "identity,max_residual\n";
  bool ok = true;
  for (const auto& [name, v] : rows) {
    out << name << "," << num(v) << "\n";
    ok &= v <= 1e-10;
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffeomorphic image and landmark matching", "diffeo-match"};
  app.require_subcommand(1);

  CommonOptions relax_o, shoot_o, lm_o, ep_o;
  ImagePair relax_p, shoot_p;
  ShootFlags shoot_f;
  PointFlags lm_f;
  EpdiffFlags ep_f;
  WarpFlags warp_f;
  GeometryFlags geo_f;

  auto* relax = app.add_subcommand("register-relax", "match two images over velocity paths");
  add_common(relax, relax_o);
  add_images(relax, relax_p);

  auto* shoot = app.add_subcommand("register-shoot", "match two images by initial momentum");
  add_common(shoot, shoot_o);
  add_images(shoot, shoot_p);
  shoot->add_option("--p0-basis", shoot_f.p0_basis, "B-spline knots per axis for P0");
  shoot->add_option("--filter", shoot_f.filter, "fraction of each spectrum removed per step");

  auto* lm = app.add_subcommand("landmarks", "match point sets by landmark geodesics");
  add_common(lm, lm_o);
  lm->add_option("--points", lm_f.points, "source points CSV (id,x,y[,z])");
  lm->add_option("--targets", lm_f.targets, "target points CSV");

  auto* ep = app.add_subcommand("simulate-epdiff", "integrate the momentum equation from random data");
  add_common(ep, ep_o);
  ep->add_option("--n", ep_f.n, "grid nodes per axis");
  ep->add_option("--dim", ep_f.dim, "spatial dimension (1-3)");
  ep->add_option("--speed", ep_f.speed, "initial max |u| in grid cells");

  auto* warp = app.add_subcommand("warp-grid", "render a lattice pulled back through a map");
  warp->add_option("--deformation", warp_f.deformation, "raw grid of map positions")->required();
  warp->add_option("--out", warp_f.out, "output .pgm or .raw file")->required();
  warp->add_option("--pitch", warp_f.pitch, "lattice spacing in nodes");

  auto* geo = app.add_subcommand("check-geometry", "print SO(3) identity residuals as CSV");
  geo->add_option("--draws", geo_f.draws, "random samples per identity");
  geo->add_option("--seed", geo_f.seed, "random seed");

  if (argc < 2) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (relax->parsed()) return register_relax(relax_o, relax_p, out, err);
    if (shoot->parsed()) return register_shoot(shoot_o, shoot_p, shoot_f, out, err);
    if (lm->parsed()) return landmarks(lm_o, lm_f, out, err);
    if (ep->parsed()) return simulate_epdiff(ep_o, ep_f, out);
    if (warp->parsed()) return warp_grid(warp_f, out);
    if (geo->parsed()) return check_geometry(geo_f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace diffeo
