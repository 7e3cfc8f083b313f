#include "diffeo/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <new>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace diffeo {

namespace {

int signed_mode(int i, int n) { return i <= (n - 1) / 2 ? i : i - n; }

// Plan creation is not thread-safe in FFTW; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct Spectral::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  explicit Plans(const Grid& g) {
    int n[3];
    for (int a = 0; a < g.dim; ++a) n[a] = g.extent[a];
    const size_t total = size_t(g.size());
    fftw_complex* in = fftw_alloc_complex(total);
    fftw_complex* out = fftw_alloc_complex(total);
    const unsigned flags = FFTW_ESTIMATE;
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      forward = fftw_plan_dft(g.dim, n, in, out, FFTW_FORWARD, flags);
      backward = fftw_plan_dft(g.dim, n, in, out, FFTW_BACKWARD, flags);
    }
    fftw_free(in);
    fftw_free(out);
    if (!forward || !backward) throw std::runtime_error("Spectral: FFT planning failed");
  }
  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

Spectral::Spectral(const Grid& g) : grid_(g), plans_(std::make_shared<const Plans>(g)) {
  const Index n = g.size();
  xi2_ = Eigen::ArrayXd::Zero(n);
  rel_ = Eigen::ArrayXd::Zero(n);
  for (int a = 0; a < 3; ++a) {
    xi_[a] = Eigen::ArrayXd::Zero(n);
    dxi_[a] = Eigen::ArrayXd::Zero(n);
  }
  for (Index i = 0; i < n; ++i) {
    const auto idx = g.unravel(i);
    for (int a = 0; a < g.dim; ++a) {
      const int na = g.extent[a];
      const int m = signed_mode(idx[a], na);
      const double xi = 2.0 * std::numbers::pi * m / (na * g.spacing);
      xi_[a][i] = xi;
      dxi_[a][i] = (na % 2 == 0 && 2 * idx[a] == na) ? 0.0 : xi;
      xi2_[i] += xi * xi;
      rel_[i] = std::max(rel_[i], na > 1 ? std::abs(double(m)) / (0.5 * na) : 0.0);
    }
  }
}

namespace {

// Per-thread SIMD-aligned scratch reused across transforms; grows on demand.
struct FftScratch {
  fftw_complex* in = nullptr;
  fftw_complex* out = nullptr;
  Index capacity = 0;

  ~FftScratch() { release(); }
  void release() {
    fftw_free(in);
    fftw_free(out);
    in = out = nullptr;
    capacity = 0;
  }
  void reserve(Index n) {
    if (n <= capacity) return;
    release();
    in = fftw_alloc_complex(size_t(n));
    out = fftw_alloc_complex(size_t(n));
    if (!in || !out) throw std::bad_alloc();
    capacity = n;
  }
};

FftScratch& scratch(Index n) {
  thread_local FftScratch s;
  s.reserve(n);
  return s;
}

std::complex<double>* as_complex(fftw_complex* p) { return reinterpret_cast<std::complex<double>*>(p); }

}  // namespace

Eigen::VectorXcd Spectral::forward(const Eigen::VectorXd& f) const {
  const Index n = f.size();
  FftScratch& s = scratch(n);
  Eigen::Map<Eigen::VectorXcd>(as_complex(s.in), n) = f.cast<std::complex<double>>();
  fftw_execute_dft(plans_->forward, s.in, s.out);
  return Eigen::Map<Eigen::VectorXcd>(as_complex(s.out), n);
}

Eigen::VectorXd Spectral::inverse(const Eigen::VectorXcd& c) const {
  const Index n = c.size();
  FftScratch& s = scratch(n);
  Eigen::Map<Eigen::VectorXcd>(as_complex(s.in), n) = c;
  fftw_execute_dft(plans_->backward, s.in, s.out);
  return Eigen::Map<Eigen::VectorXcd>(as_complex(s.out), n).real() / double(grid_.size());
}

Eigen::VectorXcd Spectral::forward_complex(const Eigen::VectorXcd& f) const {
  const Index n = f.size();
  FftScratch& s = scratch(n);
  Eigen::Map<Eigen::VectorXcd>(as_complex(s.in), n) = f;
  fftw_execute_dft(plans_->forward, s.in, s.out);
  return Eigen::Map<Eigen::VectorXcd>(as_complex(s.out), n);
}

Eigen::VectorXcd Spectral::inverse_complex(const Eigen::VectorXcd& c) const {
  const Index n = c.size();
  FftScratch& s = scratch(n);
  Eigen::Map<Eigen::VectorXcd>(as_complex(s.in), n) = c;
  fftw_execute_dft(plans_->backward, s.in, s.out);
  return Eigen::Map<Eigen::VectorXcd>(as_complex(s.out), n) / double(grid_.size());
}

Eigen::VectorXd Spectral::multiply(const Eigen::VectorXd& f, const Eigen::ArrayXd& symbol) const {
  Eigen::VectorXcd c = forward(f);
  c.array() *= symbol.cast<std::complex<double>>();
  return inverse(c);
}

Eigen::VectorXd Spectral::derivative(const Eigen::VectorXd& f, int axis) const {
  Eigen::VectorXcd c = forward(f);
  c.array() *= dxi_[axis].cast<std::complex<double>>() * std::complex<double>(0, 1);
  return inverse(c);
}

VectorField Spectral::gradient(const ScalarField& f) const {
  require_same_grid(grid_, f.grid, "Spectral::gradient");
  VectorField g(grid_);
  const Eigen::VectorXcd c = forward(f.values);
  for (int a = 0; a < grid_.dim; ++a) {
    Eigen::VectorXcd ca = c.array() * dxi_[a].cast<std::complex<double>>() *
                          std::complex<double>(0, 1);
    g.values.col(a) = inverse(ca);
  }
  return g;
}

ScalarField Spectral::divergence(const VectorField& v) const {
  require_same_grid(grid_, v.grid, "Spectral::divergence");
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(grid_.size());
  for (int a = 0; a < grid_.dim; ++a) {
    acc.array() += forward(v.values.col(a)).array() * dxi_[a].cast<std::complex<double>>() *
                   std::complex<double>(0, 1);
  }
  return ScalarField(grid_, inverse(acc));
}

std::array<Eigen::MatrixXd, 3> Spectral::jacobian(const VectorField& v) const {
  std::array<Eigen::MatrixXd, 3> out;
  for (int b = 0; b < grid_.dim; ++b) out[b].resize(grid_.size(), grid_.dim);
  for (int a = 0; a < grid_.dim; ++a) {
    const Eigen::VectorXcd c = forward(v.values.col(a));
    for (int b = 0; b < grid_.dim; ++b) {
      Eigen::VectorXcd cb = c.array() * dxi_[b].cast<std::complex<double>>() *
                            std::complex<double>(0, 1);
      out[b].col(a) = inverse(cb);
    }
  }
  return out;
}

Eigen::VectorXd Spectral::low_pass(const Eigen::VectorXd& f, double cut) const {
  if (cut <= 0) return f;
  Eigen::VectorXcd c = forward(f);
  const double keep = 1.0 - cut;
  for (Index i = 0; i < c.size(); ++i)
    if (rel_[i] > keep + 1e-12) c[i] = 0;
  return inverse(c);
}

Eigen::VectorXd Spectral::interpolate_at(const Eigen::VectorXd& f,
                                         const Eigen::MatrixXd& points) const {
  return interpolate_columns(f, points).col(0);
}

Eigen::MatrixXd Spectral::interpolate_columns(const Eigen::MatrixXd& f,
                                              const Eigen::MatrixXd& points) const {
  using C = std::complex<double>;
  using RowMajor = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Index m = points.rows();
  const int d = grid_.dim;
  if (points.cols() != d) throw std::invalid_argument("interpolate_at: point dimension mismatch");

  std::array<Eigen::MatrixXcd, 3> e;
  for (int a = 0; a < d; ++a) {
    const int n = grid_.extent[a];
    e[a].resize(m, n);
    for (int k = 0; k < n; ++k) {
      const double xi = 2.0 * std::numbers::pi * signed_mode(k, n) / (n * grid_.spacing);
      for (Index p = 0; p < m; ++p) e[a](p, k) = std::polar(1.0, xi * points(p, a));
    }
  }
  const int n0 = grid_.extent[0];
  const Index rest = grid_.size() / n0;
  Eigen::MatrixXd out(m, f.cols());
  for (Index col = 0; col < f.cols(); ++col) {
    const Eigen::VectorXcd coef = forward(f.col(col)) / double(grid_.size());
    // coefficients as an n0 x rest matrix in the flat row-major layout
    const Eigen::Map<const RowMajor> cm(coef.data(), n0, rest);
    const Eigen::MatrixXcd t = e[0] * cm;
    for (Index p = 0; p < m; ++p) {
      C acc = 0;
      if (d == 1) {
        acc = t(p, 0);
      } else if (d == 2) {
        acc = (t.row(p).array() * e[1].row(p).array()).sum();
      } else {
        const int n1 = grid_.extent[1], n2 = grid_.extent[2];
        for (int k1 = 0; k1 < n1; ++k1) {
          C inner = 0;
          for (int k2 = 0; k2 < n2; ++k2) inner += t(p, Index(k1) * n2 + k2) * e[2](p, k2);
          acc += inner * e[1](p, k1);
        }
      }
      out(p, col) = acc.real();
    }
  }
  return out;
}

}  // namespace diffeo
