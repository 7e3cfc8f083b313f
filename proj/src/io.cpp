#include "diffeo/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <map>
#include <sstream>

namespace diffeo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- numbers

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && first != last;
}

// ---------------------------------------------------------------- config

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Key number_key(const std::string& name, std::function<T&(RunConfig&)> field) {
  return {name,
          [name, field](RunConfig& c, const std::string& v) {
            T x{};
            if (!parse_number(v, x)) throw std::invalid_argument("expected a number");
            if constexpr (std::is_floating_point_v<T>) {
              if (!std::isfinite(x)) throw std::invalid_argument("expected a finite number");
            }
            field(c) = x;
          },
          [field](const RunConfig& c) {
            RunConfig copy = c;
            const T x = field(copy);
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(x);
            } else {
              return std::to_string(x);
            }
          }};
}

Key string_key(const std::string& name, std::function<std::string&(RunConfig&)> field) {
  return {name, [field](RunConfig& c, const std::string& v) { field(c) = v; },
          [field](const RunConfig& c) {
            RunConfig copy = c;
            return field(copy);
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"solver",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "relax") c.solver = Solver::relax;
                   else if (v == "shoot") c.solver = Solver::shoot;
                   else if (v == "landmarks") c.solver = Solver::landmarks;
                   else throw std::invalid_argument("solver must be relax, shoot or landmarks");
                 },
                 [](const RunConfig& c) { return solver_name(c.solver); }});
    k.push_back({"kernel",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "gaussian") c.kernel.kind = KernelKind::gaussian;
                   else if (v == "sobolev") c.kernel.kind = KernelKind::sobolev;
                   else throw std::invalid_argument("kernel must be gaussian or sobolev");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.kernel.kind == KernelKind::gaussian ? "gaussian"
                                                                            : "sobolev");
                 }});
    k.push_back(number_key<double>("kernel_lambda", [](RunConfig& c) -> double& { return c.kernel.lambda; }));
    k.push_back(number_key<double>("kernel_alpha", [](RunConfig& c) -> double& { return c.kernel.alpha; }));
    k.push_back(number_key<int>("kernel_order", [](RunConfig& c) -> int& { return c.kernel.order; }));
    k.push_back(number_key<double>("sigma2", [](RunConfig& c) -> double& { return c.match.sigma2; }));
    k.push_back(number_key<int>("n_time", [](RunConfig& c) -> int& { return c.match.n_time; }));
    k.push_back(number_key<int>("max_iters", [](RunConfig& c) -> int& { return c.match.max_iters; }));
    k.push_back(number_key<double>("step0", [](RunConfig& c) -> double& { return c.match.step0; }));
    k.push_back(number_key<double>("armijo_c", [](RunConfig& c) -> double& { return c.match.armijo_c; }));
    k.push_back(number_key<double>("tol_grad", [](RunConfig& c) -> double& { return c.match.tol_grad; }));
    k.push_back(number_key<int>("shoot_steps", [](RunConfig& c) -> int& { return c.shoot.n_steps; }));
    k.push_back(number_key<double>("filter", [](RunConfig& c) -> double& { return c.shoot.filter; }));
    k.push_back(number_key<int>("snapshot_every", [](RunConfig& c) -> int& { return c.shoot.snapshot_every; }));
    k.push_back(number_key<int>("p0_basis", [](RunConfig& c) -> int& { return c.p0_basis; }));
    k.push_back(number_key<int>("opt_steps", [](RunConfig& c) -> int& { return c.opt_steps; }));
    k.push_back(number_key<double>("active_threshold", [](RunConfig& c) -> double& { return c.active_threshold; }));
    k.push_back(number_key<double>("fd_eps", [](RunConfig& c) -> double& { return c.fd_eps; }));
    k.push_back(number_key<int>("landmark_steps", [](RunConfig& c) -> int& { return c.landmark_steps; }));
    k.push_back(number_key<double>("landmark_sigma2", [](RunConfig& c) -> double& { return c.landmark_sigma2; }));
    k.push_back(number_key<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    k.push_back(number_key<double>("presmooth", [](RunConfig& c) -> double& { return c.presmooth; }));
    k.push_back(number_key<double>("grid_spacing", [](RunConfig& c) -> double& { return c.grid_spacing; }));
    k.push_back(string_key("fixed", [](RunConfig& c) -> std::string& { return c.fixed; }));
    k.push_back(string_key("moving", [](RunConfig& c) -> std::string& { return c.moving; }));
    k.push_back(string_key("points", [](RunConfig& c) -> std::string& { return c.points; }));
    k.push_back(string_key("targets", [](RunConfig& c) -> std::string& { return c.targets; }));
    k.push_back(string_key("out", [](RunConfig& c) -> std::string& { return c.out; }));
    return k;
  }();
  return table;
}

const Key* find_key(const std::string& name) {
  for (const Key& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

std::string solver_name(Solver s) {
  switch (s) {
    case Solver::relax: return "relax";
    case Solver::shoot: return "shoot";
    case Solver::landmarks: return "landmarks";
  }
  return "relax";
}

KernelSpec RunConfig::default_kernel() {
  KernelSpec k;
  k.kind = KernelKind::gaussian;
  k.lambda = 0.125;
  k.alpha = 0.05;
  k.order = 3;
  k.dim = 2;
  return k;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name);
  return out;
}

void RunConfig::validate() const {
  try {
    kernel.validate();
    match.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
  try {
    shoot.validate();
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    if (msg.rfind("n_steps", 0) == 0) msg = "shoot_steps" + msg.substr(7);
    throw ConfigError(msg, 0);
  }
  if (p0_basis < 4) throw ConfigError("p0_basis must be >= 4", 0);
  if (opt_steps < 1) throw ConfigError("opt_steps must be >= 1", 0);
  if (!(active_threshold >= 0 && active_threshold < 1))
    throw ConfigError("active_threshold must be in [0, 1)", 0);
  if (!(fd_eps > 0)) throw ConfigError("fd_eps must be > 0", 0);
  if (landmark_steps < 1) throw ConfigError("landmark_steps must be >= 1", 0);
  if (!(landmark_sigma2 > 0)) throw ConfigError("landmark_sigma2 must be > 0", 0);
  if (!(presmooth >= 0)) throw ConfigError("presmooth must be >= 0", 0);
  if (!(grid_spacing >= 0)) throw ConfigError("grid_spacing must be >= 0", 0);
}

void RunConfig::require_inputs() const {
  const std::pair<const char*, const std::string*> inputs[] = {
      {"fixed", &fixed}, {"moving", &moving}, {"points", &points}, {"targets", &targets}};
  for (const auto& [name, path] : inputs)
    if (!path->empty() && !fs::exists(*path))
      throw ConfigError(std::string(name) + " file does not exist: " + *path, 0);
}

ShootMatchConfig RunConfig::shoot_match() const {
  ShootMatchConfig c;
  c.match = match;
  c.shoot = shoot;
  c.p0_basis = p0_basis;
  c.opt_steps = opt_steps;
  c.active_threshold = active_threshold;
  c.fd_eps = fd_eps;
  return c;
}

LandmarkMatchConfig RunConfig::landmark_match() const {
  LandmarkMatchConfig c;
  c.sigma2 = landmark_sigma2;
  c.n_steps = landmark_steps;
  c.max_iters = match.max_iters;
  return c;
}

bool RunConfig::operator==(const RunConfig& o) const {
  if (kernel.dim != o.kernel.dim) return false;
  for (const Key& k : keys())
    if (k.get(*this) != k.get(o)) return false;
  return true;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, int line) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'", line);
  try {
    k->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what() + " (got '" + value + "')", line);
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", line);
    if (seen.count(key)) throw ConfigError("duplicate key '" + key + "'", line);
    apply_setting(cfg, key, value, line);
    seen[key] = line;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // point at the line that set the offending field when there is one
    const std::string msg = e.what();
    for (const auto& [key, where] : seen) {
      if (msg.rfind(key + " ", 0) == 0) throw ConfigError(msg, where);
    }
    throw;
  }
  return cfg;
}

RunConfig parse_config(const fs::path& path) { return parse_config_text(read_file(path)); }

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const Key& k : keys()) os << k.name << " = " << k.get(cfg) << "\n";
  return os.str();
}

// ---------------------------------------------------------------- files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw FormatError("read error on " + path.string());
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const fs::path tmp =
      dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw fs::filesystem_error("cannot create file", tmp,
                                 std::make_error_code(std::errc::io_error));
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw fs::filesystem_error("write failed", tmp, std::make_error_code(std::errc::io_error));
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw fs::filesystem_error("cannot rename temporary file", tmp, path, ec);
  }
}

// ---------------------------------------------------------------- raw grids

namespace {

constexpr const char* kRawFormat = "diffeo-raw";

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(char((bits >> (8 * b)) & 0xffu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string encode_raw_grid(const Grid& g, const Eigen::MatrixXd& values) {
  if (values.rows() != g.size() || values.cols() < 1)
    throw std::invalid_argument("encode_raw_grid: values do not match the grid");
  nlohmann::ordered_json h;
  h["format"] = kRawFormat;
  std::vector<int> dims(g.extent.begin(), g.extent.begin() + g.dim);
  h["dims"] = dims;
  h["spacing"] = g.spacing;
  h["arity"] = values.cols();
  h["dtype"] = "float32";
  h["endianness"] = "little";
  std::string out = h.dump() + "\n";
  out.reserve(out.size() + size_t(values.size()) * 4);
  for (Index i = 0; i < values.rows(); ++i)
    for (Index c = 0; c < values.cols(); ++c) put_f32_le(out, float(values(i, c)));
  return out;
}

RawGrid decode_raw_grid(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError("raw grid: missing header line");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("raw grid: malformed header: ") + e.what());
  }
  try {
    if (h.at("format").get<std::string>() != kRawFormat)
      throw FormatError("raw grid: unexpected format tag");
    if (h.at("dtype").get<std::string>() != "float32")
      throw FormatError("raw grid: dtype must be float32");
    if (h.at("endianness").get<std::string>() != "little")
      throw FormatError("raw grid: endianness must be little");
    const auto dims = h.at("dims").get<std::vector<long long>>();
    const double spacing = h.at("spacing").get<double>();
    const long long arity = h.at("arity").get<long long>();
    if (dims.empty() || dims.size() > 3) throw FormatError("raw grid: dims must have 1 to 3 entries");
    if (!(spacing > 0) || !std::isfinite(spacing)) throw FormatError("raw grid: spacing must be > 0");
    if (arity < 1 || arity > 64) throw FormatError("raw grid: arity out of range");
    std::array<int, 3> ext{1, 1, 1};
    std::uint64_t count = std::uint64_t(arity);
    constexpr std::uint64_t limit = std::uint64_t(1) << 40;
    for (size_t a = 0; a < dims.size(); ++a) {
      if (dims[a] < 1 || dims[a] > std::numeric_limits<int>::max())
        throw FormatError("raw grid: dimension out of range");
      ext[a] = int(dims[a]);
      count *= std::uint64_t(dims[a]);
      if (count > limit) throw FormatError("raw grid: dimension overflow");
    }
    const std::uint64_t payload = bytes.size() - nl - 1;
    if (payload < count * 4) throw FormatError("raw grid: truncated payload");
    if (payload > count * 4) throw FormatError("raw grid: trailing bytes after payload");
    RawGrid r;
    r.grid = Grid(int(dims.size()), ext, spacing);
    r.arity = int(arity);
    r.values.resize(r.grid.size(), arity);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
    for (Index i = 0; i < r.values.rows(); ++i)
      for (Index c = 0; c < arity; ++c, p += 4) r.values(i, c) = get_f32_le(p);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("raw grid: bad header field: ") + e.what());
  }
}

void write_raw_grid(const fs::path& path, const Grid& g, const Eigen::MatrixXd& values) {
  write_file_atomic(path, encode_raw_grid(g, values));
}

RawGrid read_raw_grid(const fs::path& path) { return decode_raw_grid(read_file(path)); }

// ---------------------------------------------------------------- PGM

namespace {

// Reads the next header token, skipping whitespace and comments.
std::string pgm_token(const std::string& s, size_t& pos) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const size_t b = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '#') ++pos;
  return s.substr(b, pos - b);
}

long long pgm_int(const std::string& s, size_t& pos, const char* what) {
  const std::string tok = pgm_token(s, pos);
  long long v = 0;
  if (!parse_number(tok, v)) throw FormatError(std::string("pgm: malformed ") + what);
  return v;
}

}  // namespace

Image decode_pgm(const std::string& bytes, double spacing) {
  size_t pos = 0;
  if (pgm_token(bytes, pos) != "P5") throw FormatError("pgm: expected binary P5 magic");
  const long long w = pgm_int(bytes, pos, "width");
  const long long h = pgm_int(bytes, pos, "height");
  const long long maxval = pgm_int(bytes, pos, "maxval");
  if (w < 1 || h < 1) throw FormatError("pgm: width and height must be positive");
  if (w > (1 << 20) || h > (1 << 20) || w * h > (1ll << 32))
    throw FormatError("pgm: dimension overflow");
  if (maxval < 1 || maxval > 65535) throw FormatError("pgm: maxval must be in [1, 65535]");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("pgm: missing whitespace after header");
  ++pos;
  const int bps = maxval < 256 ? 1 : 2;
  const std::uint64_t need = std::uint64_t(w) * std::uint64_t(h) * std::uint64_t(bps);
  if (bytes.size() - pos < need) throw FormatError("pgm: truncated payload");
  const double hsp = spacing > 0 ? spacing : 1.0 / double(h);
  Image img(Grid(2, {int(h), int(w), 1}, hsp));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (Index i = 0; i < img.grid.size(); ++i) {
    unsigned v = bps == 1 ? p[i] : (unsigned(p[2 * i]) << 8) | p[2 * i + 1];
    if (v > unsigned(maxval)) throw FormatError("pgm: sample exceeds maxval");
    img[i] = double(v) / double(maxval);
  }
  return img;
}

Image read_pgm(const fs::path& path, double spacing) { return decode_pgm(read_file(path), spacing); }

std::string encode_pgm(const Image& img, int maxval) {
  if (img.grid.dim != 2) throw std::invalid_argument("pgm: image must be 2-d");
  if (maxval < 1 || maxval > 65535) throw std::invalid_argument("pgm: maxval must be in [1, 65535]");
  const int h = img.grid.extent[0], w = img.grid.extent[1];
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                    std::to_string(maxval) + "\n";
  const bool wide = maxval > 255;
  for (Index i = 0; i < img.grid.size(); ++i) {
    double v = img[i];
    if (!std::isfinite(v)) v = 0;
    v = std::clamp(v, 0.0, 1.0);
    const unsigned q = unsigned(std::lround(v * maxval));
    if (wide) out.push_back(char(q >> 8));
    out.push_back(char(q & 0xffu));
  }
  return out;
}

void write_pgm(const fs::path& path, const Image& img, int maxval) {
  write_file_atomic(path, encode_pgm(img, maxval));
}

// ---------------------------------------------------------------- CSV points

PointSet parse_points_csv(const std::string& text) {
  PointSet ps;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(trim(f));
    if (fields.size() < 2 || fields.size() > 4)
      throw FormatError("points csv line " + std::to_string(line_no) + ": expected id,x[,y[,z]]");
    std::vector<double> coords;
    bool numeric = true;
    for (size_t c = 1; c < fields.size(); ++c) {
      double v = 0;
      if (!parse_number(fields[c], v) || !std::isfinite(v)) {
        numeric = false;
        break;
      }
      coords.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && ps.ids.empty() && width == 0) {
        width = fields.size();  // header
        continue;
      }
      throw FormatError("points csv line " + std::to_string(line_no) + ": bad coordinate");
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw FormatError("points csv line " + std::to_string(line_no) + ": inconsistent columns");
    ps.ids.push_back(fields[0]);
    rows.push_back(coords);
  }
  if (rows.empty()) throw FormatError("points csv: no points");
  ps.points.resize(Index(rows.size()), Index(width - 1));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t c = 0; c < rows[i].size(); ++c) ps.points(Index(i), Index(c)) = rows[i][c];
  return ps;
}

PointSet read_points_csv(const fs::path& path) { return parse_points_csv(read_file(path)); }

}  // namespace diffeo
