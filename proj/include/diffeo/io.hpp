// Run configuration and file formats.
//
// Config files hold `key = value` lines; `#` starts a comment. Every key has
// a default, so an empty file is a valid configuration.
//
// Raw grids are one header line of JSON followed by packed little-endian
// float32 values, node-major (all components of node 0, then node 1, ...),
// nodes in the row-major order of Grid.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffeo/grid.hpp"
#include "diffeo/image.hpp"
#include "diffeo/kernels.hpp"
#include "diffeo/landmarks.hpp"
#include "diffeo/relax.hpp"
#include "diffeo/shoot.hpp"

namespace diffeo {

/// Malformed or inconsistent input files.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Config syntax or validation failure. `line` is 0 when not tied to a line.
struct ConfigError : std::runtime_error {
  int line = 0;
  ConfigError(const std::string& msg, int line_no)
      : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
        line(line_no) {}
};

enum class Solver { relax, shoot, landmarks };

struct RunConfig {
  Solver solver = Solver::relax;
  KernelSpec kernel = default_kernel();
  MatchConfig match;
  ShootConfig shoot;
  int p0_basis = 8;
  int opt_steps = 16;
  double active_threshold = 1e-2;
  double fd_eps = 1e-6;
  int landmark_steps = 100;
  double landmark_sigma2 = 1e-4;
  std::uint64_t seed = 0;
  /// Gaussian pre-smoothing width applied to loaded images (0 = off).
  double presmooth = 0;
  /// Physical grid spacing; 0 maps the first image axis onto [0, 1).
  double grid_spacing = 0;
  std::string fixed, moving, points, targets, out;

  static KernelSpec default_kernel();

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// Throws ConfigError when a non-empty input path does not exist.
  void require_inputs() const;

  ShootMatchConfig shoot_match() const;
  LandmarkMatchConfig landmark_match() const;

  bool operator==(const RunConfig&) const;
};

/// Applies one `key = value` assignment; `line` is used in error messages.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, int line = 0);
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);
/// Every key with its value, in a form parse_config_text reads back exactly.
std::string serialize_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

std::string solver_name(Solver s);

struct RawGrid {
  Grid grid;
  int arity = 1;
  /// grid.size() x arity
  Eigen::MatrixXd values;
};

std::string encode_raw_grid(const Grid& g, const Eigen::MatrixXd& values);
RawGrid decode_raw_grid(const std::string& bytes);
void write_raw_grid(const std::filesystem::path& path, const Grid& g, const Eigen::MatrixXd& values);
RawGrid read_raw_grid(const std::filesystem::path& path);

/// 2-d image from a binary PGM (P5), scaled by 1/maxval. Axis 0 runs down
/// the rows, axis 1 along a row.
Image decode_pgm(const std::string& bytes, double spacing = 0);
Image read_pgm(const std::filesystem::path& path, double spacing = 0);
/// Values are clamped to [0, 1] and rounded; maxval 255 writes 8-bit samples,
/// anything up to 65535 writes 16-bit big-endian samples.
std::string encode_pgm(const Image& img, int maxval = 255);
void write_pgm(const std::filesystem::path& path, const Image& img, int maxval = 255);

struct PointSet {
  std::vector<std::string> ids;
  Eigen::MatrixXd points;
};

/// `id,x,y[,z]` rows; a first line with a non-numeric coordinate is a header.
PointSet parse_points_csv(const std::string& text);
PointSet read_points_csv(const std::filesystem::path& path);

/// Shortest round-tripping decimal form of a double.
std::string format_double(double v);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace diffeo
