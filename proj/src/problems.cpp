#include "vrcn/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "vrcn/errors.hpp"
#include "vrcn/kernels.hpp"
#include "vrcn/krylov.hpp"

namespace vrcn {

void FiniteSumProblem::check_index(std::size_t i) const {
  if (i >= n()) {
    throw std::out_of_range("component index " + std::to_string(i) + " out of range (n = " +
                            std::to_string(n()) + ")");
  }
}

void FiniteSumProblem::check_point(std::span<const double> x) const {
  require_same_dim(d(), x.size(), "problem point");
  require_finite(x, "problem point");
}

Vector FiniteSumProblem::component_grad(std::size_t i, std::span<const double> x) const {
  check_index(i);
  check_point(x);
  Vector out(d());
  component_grad_into(i, x, out.span());
  return out;
}

Vector FiniteSumProblem::component_hvp(std::size_t i, std::span<const double> x,
                                       std::span<const double> v) const {
  check_index(i);
  check_point(x);
  require_same_dim(d(), v.size(), "hvp direction");
  Vector out(d());
  component_hvp_into(i, x, v, out.span());
  return out;
}

Matrix FiniteSumProblem::component_hessian_dense(std::size_t i, std::span<const double> x) const {
  check_index(i);
  check_point(x);
  Matrix m(d(), d());
  component_hessian_accumulate(i, x, 1.0, m);
  return m;
}

double FiniteSumProblem::full_value(std::span<const double> x) const {
  check_point(x);
  double sum = 0.0;
  for (std::size_t i = 0; i < n(); ++i) sum += component_value(i, x);
  return sum / static_cast<double>(n());
}

Vector FiniteSumProblem::full_grad(std::span<const double> x) const {
  check_point(x);
  const auto& k = kernels::active();
  Vector sum(d());
  Vector gi(d());
  for (std::size_t i = 0; i < n(); ++i) {
    component_grad_into(i, x, gi.span());
    k.axpy(1.0, gi.data(), sum.data(), d());
  }
  sum *= 1.0 / static_cast<double>(n());
  return sum;
}

Matrix FiniteSumProblem::full_hess_dense(std::span<const double> x) const {
  check_point(x);
  Matrix m(d(), d());
  const double w = 1.0 / static_cast<double>(n());
  for (std::size_t i = 0; i < n(); ++i) component_hessian_accumulate(i, x, w, m);
  return m;
}

SymmetricOperator FiniteSumProblem::full_hess(std::span<const double> x) const {
  return SymmetricOperator::dense(full_hess_dense(x));
}

namespace {

// log(1 + exp(-z)) without overflow.
double softplus_neg(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

// 1 / (1 + exp(z))
double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

enum class Regularizer { L2, SmoothNonconvex };

class LogisticProblem final : public FiniteSumProblem {
 public:
  LogisticProblem(Dataset data, Regularizer reg, double strength)
      : data_(std::move(data)), reg_(reg), strength_(strength) {
    if (data_.features.rows() == 0) throw std::invalid_argument("logistic problem: no samples");
    require_same_dim(data_.features.rows(), data_.labels.size(), "logistic labels");
    for (double b : data_.labels) {
      if (b != 1.0 && b != -1.0) {
        throw std::invalid_argument("logistic problem: labels must be +1 or -1");
      }
    }
    require_finite(data_.features.flat(), "logistic features");
    if (!(strength_ >= 0.0) || !std::isfinite(strength_)) {
      throw std::invalid_argument("logistic problem: regularization strength must be >= 0");
    }
    for (std::size_t i = 0; i < n(); ++i) {
      max_row_norm_ = std::max(max_row_norm_, norm(data_.features.row(i)));
    }
  }

  std::size_t n() const override { return data_.features.rows(); }
  std::size_t d() const override { return data_.features.cols(); }
  std::string kind() const override {
    return reg_ == Regularizer::L2 ? "logistic_l2" : "nonconvex_logistic";
  }
  bool convex() const override { return reg_ == Regularizer::L2; }

  double component_value(std::size_t i, std::span<const double> x) const override {
    return softplus_neg(margin(i, x)) + reg_value(x);
  }

  void component_grad_into(std::size_t i, std::span<const double> x,
                           std::span<double> out) const override {
    const double coef = -data_.labels[i] * sigmoid_neg(margin(i, x));
    const auto a = data_.features.row(i);
    for (std::size_t j = 0; j < d(); ++j) out[j] = coef * a[j] + reg_grad(x[j]);
  }

  void component_hvp_into(std::size_t i, std::span<const double> x, std::span<const double> v,
                          std::span<double> out) const override {
    const auto a = data_.features.row(i);
    const double w = curvature(i, x) * kernels::active().dot(a.data(), v.data(), d());
    for (std::size_t j = 0; j < d(); ++j) out[j] = w * a[j] + reg_curv(x[j]) * v[j];
  }

  void component_hessian_accumulate(std::size_t i, std::span<const double> x, double weight,
                                    Matrix& acc) const override {
    add_outer(acc, weight * curvature(i, x), data_.features.row(i));
    for (std::size_t j = 0; j < d(); ++j) acc(j, j) += weight * reg_curv(x[j]);
  }

  KnownConstants analytic_constants() const override {
    if (reg_ != Regularizer::L2) return {};
    KnownConstants c;
    c.LH = max_row_norm_ * max_row_norm_ / 4.0 + strength_;
    c.L2 = kLogisticThirdDerivativeMax * max_row_norm_ * max_row_norm_ * max_row_norm_;
    return c;
  }

 private:
  double margin(std::size_t i, std::span<const double> x) const {
    return data_.labels[i] * kernels::active().dot(data_.features.row(i).data(), x.data(), d());
  }

  double curvature(std::size_t i, std::span<const double> x) const {
    const double z = margin(i, x);
    const double s = sigmoid_neg(z);
    return s * (1.0 - s);
  }

  double reg_value(std::span<const double> x) const {
    double sum = 0.0;
    if (reg_ == Regularizer::L2) {
      for (double v : x) sum += v * v;
      return 0.5 * strength_ * sum;
    }
    for (double v : x) sum += v * v / (1.0 + v * v);
    return strength_ * sum;
  }

  double reg_grad(double v) const {
    if (reg_ == Regularizer::L2) return strength_ * v;
    const double q = 1.0 + v * v;
    return 2.0 * strength_ * v / (q * q);
  }

  double reg_curv(double v) const {
    if (reg_ == Regularizer::L2) return strength_;
    const double q = 1.0 + v * v;
    return 2.0 * strength_ * (1.0 - 3.0 * v * v) / (q * q * q);
  }

  Dataset data_;
  Regularizer reg_;
  double strength_;
  double max_row_norm_ = 0.0;
};

class QuadraticProblem final : public FiniteSumProblem {
 public:
  QuadraticProblem(std::vector<std::shared_ptr<const Matrix>> a, std::vector<Vector> b)
      : a_(std::move(a)), b_(std::move(b)) {
    if (a_.empty()) throw std::invalid_argument("quadratic problem: no components");
    require_same_dim(a_.size(), b_.size(), "quadratic components");
    const std::size_t dim = b_[0].size();
    for (std::size_t i = 0; i < a_.size(); ++i) {
      require_same_dim(dim, b_[i].size(), "quadratic offset");
      require_same_dim(dim, a_[i]->rows(), "quadratic matrix");
      if (!is_symmetric(*a_[i], 1e-12)) {
        throw std::invalid_argument("quadratic problem: component matrix is not symmetric");
      }
    }
    summarize();
  }

  std::size_t n() const override { return a_.size(); }
  std::size_t d() const override { return b_[0].size(); }
  std::string kind() const override { return "quadratic"; }
  bool convex() const override { return convex_; }

  double component_value(std::size_t i, std::span<const double> x) const override {
    const Vector ax = matvec(*a_[i], x);
    return 0.5 * dot(x, ax) - dot(b_[i], x);
  }

  void component_grad_into(std::size_t i, std::span<const double> x,
                           std::span<double> out) const override {
    matvec_into(*a_[i], x, out);
    kernels::active().axpy(-1.0, b_[i].data(), out.data(), d());
  }

  void component_hvp_into(std::size_t i, std::span<const double>, std::span<const double> v,
                          std::span<double> out) const override {
    matvec_into(*a_[i], v, out);
  }

  void component_hessian_accumulate(std::size_t i, std::span<const double>, double weight,
                                    Matrix& acc) const override {
    add_scaled(acc, weight, *a_[i]);
  }

  KnownConstants analytic_constants() const override {
    KnownConstants c;
    c.L2 = 0.0;
    c.LH = lh_;
    c.sigma2 = sigma2_;
    if (shared_hessian_) c.sigma1 = sigma1_shared_;
    return c;
  }

  std::optional<KnownOptimum> known_optimum() const override { return optimum_; }

 private:
  void summarize() {
    const std::size_t dim = d();
    const double inv_n = 1.0 / static_cast<double>(n());
    Matrix mean_a(dim, dim);
    Vector mean_b(dim);
    double mean_sq_op = 0.0;
    shared_hessian_ = true;
    for (std::size_t i = 0; i < n(); ++i) {
      add_scaled(mean_a, inv_n, *a_[i]);
      axpy_inplace(inv_n, b_[i], mean_b.span());
      if (a_[i] != a_[0] && !(*a_[i] == *a_[0])) shared_hessian_ = false;
    }
    double var_h = 0.0;
    double var_b = 0.0;
    double op = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      if (i == 0 || a_[i] != a_[i - 1]) op = symmetric_operator_norm(*a_[i]);
      mean_sq_op += op * op * inv_n;
      var_h += inv_n * std::pow(frobenius_norm(*a_[i] - mean_a), 2);
      var_b += inv_n * norm_squared(b_[i] - mean_b);
    }
    lh_ = std::max(symmetric_operator_norm(mean_a), std::sqrt(mean_sq_op));
    sigma2_ = std::sqrt(var_h);
    sigma1_shared_ = std::sqrt(var_b);

    const Vector ev = symmetric_eigenvalues(mean_a);
    convex_ = ev[0] >= -1e-12 * std::max(1.0, std::abs(ev[dim - 1]));
    if (ev[0] > 1e-12 * std::max(1.0, std::abs(ev[dim - 1]))) {
      auto res = cg_solve(SymmetricOperator::dense(mean_a), mean_b,
                          CgOptions{0.0, 1e-14, 10 * dim + 100, false});
      KnownOptimum opt;
      opt.x = std::move(res.x);
      opt.value = -0.5 * dot(opt.x, mean_b);
      optimum_ = std::move(opt);
    }
  }

  std::vector<std::shared_ptr<const Matrix>> a_;
  std::vector<Vector> b_;
  double lh_ = 0.0;
  double sigma2_ = 0.0;
  double sigma1_shared_ = 0.0;
  bool shared_hessian_ = false;
  bool convex_ = false;
  std::optional<KnownOptimum> optimum_;
};

class DoubleWellProblem final : public FiniteSumProblem {
 public:
  DoubleWellProblem(Matrix shifts, double box) : c_(std::move(shifts)), box_(box) {
    if (c_.rows() == 0) throw std::invalid_argument("double well: n must be >= 1");
    if (c_.cols() == 0) throw std::invalid_argument("double well: d must be >= 1");
    require_finite(c_.flat(), "double well shifts");
    if (!(box_ > 0.0)) throw std::invalid_argument("double well: box must be positive");
    solve_optimum();
  }

  std::size_t n() const override { return c_.rows(); }
  std::size_t d() const override { return c_.cols(); }
  std::string kind() const override { return "double_well"; }

  double component_value(std::size_t i, std::span<const double> x) const override {
    const auto c = c_.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < d(); ++j) {
      const double u = x[j] - c[j];
      const double u2 = u * u;
      sum += 0.25 * u2 * u2 - 0.5 * x[j] * x[j];
    }
    return sum;
  }

  void component_grad_into(std::size_t i, std::span<const double> x,
                           std::span<double> out) const override {
    const auto c = c_.row(i);
    for (std::size_t j = 0; j < d(); ++j) {
      const double u = x[j] - c[j];
      out[j] = u * u * u - x[j];
    }
  }

  void component_hvp_into(std::size_t i, std::span<const double> x, std::span<const double> v,
                          std::span<double> out) const override {
    const auto c = c_.row(i);
    for (std::size_t j = 0; j < d(); ++j) {
      const double u = x[j] - c[j];
      out[j] = (3.0 * u * u - 1.0) * v[j];
    }
  }

  void component_hessian_accumulate(std::size_t i, std::span<const double> x, double weight,
                                    Matrix& acc) const override {
    const auto c = c_.row(i);
    for (std::size_t j = 0; j < d(); ++j) {
      const double u = x[j] - c[j];
      acc(j, j) += weight * (3.0 * u * u - 1.0);
    }
  }

  KnownConstants analytic_constants() const override {
    // Hessian of F is diagonal with entries 3 mean_i (x_j - c_ij)^2 - 1, whose
    // derivative in x_j is 6 (x_j - mean_i c_ij).
    double max_mean = 0.0;
    for (double m : mean_) max_mean = std::max(max_mean, std::abs(m));
    KnownConstants k;
    k.L2 = 6.0 * (box_ + max_mean);
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      double cmax = 0.0;
      for (double v : c_.row(i)) cmax = std::max(cmax, std::abs(v));
      const double bound = 3.0 * (box_ + cmax) * (box_ + cmax) + 1.0;
      mean_sq += bound * bound / static_cast<double>(n());
    }
    k.LH = std::sqrt(mean_sq);
    return k;
  }

  std::optional<KnownOptimum> known_optimum() const override { return optimum_; }

 private:
  // F separates over coordinates; each coordinate's minimizer is a root of
  // x^3 - 3 m1 x^2 + (3 m2 - 1) x - m3 with m_k the k-th raw moment of the shifts.
  void solve_optimum() {
    const std::size_t dim = d();
    const double inv_n = 1.0 / static_cast<double>(n());
    mean_ = Vector(dim);
    KnownOptimum opt{Vector(dim), 0.0};
    for (std::size_t j = 0; j < dim; ++j) {
      double m1 = 0.0, m2 = 0.0, m3 = 0.0;
      for (std::size_t i = 0; i < n(); ++i) {
        const double c = c_(i, j);
        m1 += c * inv_n;
        m2 += c * c * inv_n;
        m3 += c * c * c * inv_n;
      }
      mean_[j] = m1;
      auto deriv = [&](double x) { return x * x * x - 3.0 * m1 * x * x + (3.0 * m2 - 1.0) * x - m3; };
      auto value = [&](double x) {
        double s = 0.0;
        for (std::size_t i = 0; i < n(); ++i) {
          const double u = x - c_(i, j);
          s += 0.25 * u * u * u * u;
        }
        return s * inv_n - 0.5 * x * x;
      };
      const double bound = 1.0 + std::max({3.0 * std::abs(m1), std::abs(3.0 * m2 - 1.0), std::abs(m3)});
      const int grid = 4000;
      double best_x = 0.0;
      double best_v = std::numeric_limits<double>::infinity();
      double prev_x = -bound;
      double prev_d = deriv(prev_x);
      for (int k = 1; k <= grid; ++k) {
        const double cur_x = -bound + 2.0 * bound * k / grid;
        const double cur_d = deriv(cur_x);
        if ((prev_d < 0.0 && cur_d >= 0.0)) {
          // derivative crosses upward: a local minimizer
          double lo = prev_x, hi = cur_x;
          for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            (deriv(mid) < 0.0 ? lo : hi) = mid;
          }
          const double root = 0.5 * (lo + hi);
          const double v = value(root);
          if (v < best_v || (v == best_v && root > best_x)) {
            best_v = v;
            best_x = root;
          }
        }
        prev_x = cur_x;
        prev_d = cur_d;
      }
      opt.x[j] = best_x;
      opt.value += best_v;
    }
    optimum_ = std::move(opt);
  }

  Matrix c_;
  double box_;
  Vector mean_;
  std::optional<KnownOptimum> optimum_;
};

}  // namespace

Dataset make_classification_dataset(std::size_t n, std::size_t d, double flip, std::uint64_t seed) {
  if (n == 0 || d == 0) throw std::invalid_argument("classification dataset: n and d must be >= 1");
  if (!(flip >= 0.0 && flip <= 1.0)) throw std::invalid_argument("classification dataset: flip in [0,1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector w(d);
  for (double& v : w) v = normal(rng);
  w *= 1.0 / norm(w);
  Dataset data{Matrix(n, d), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.features.row(i);
    for (double& v : row) v = normal(rng);
    const double nr = norm(row);
    for (double& v : row) v /= nr;
    double label = dot(row, w) >= 0.0 ? 1.0 : -1.0;
    if (unif(rng) < flip) label = -label;
    data.labels[i] = label;
  }
  return data;
}

ProblemPtr make_logistic_l2(Dataset data, double mu) {
  return std::make_shared<LogisticProblem>(std::move(data), Regularizer::L2, mu);
}

ProblemPtr make_nonconvex_logistic(Dataset data, double lam) {
  return std::make_shared<LogisticProblem>(std::move(data), Regularizer::SmoothNonconvex, lam);
}

ProblemPtr make_quadratic(std::vector<Matrix> a, std::vector<Vector> b) {
  std::vector<std::shared_ptr<const Matrix>> shared;
  shared.reserve(a.size());
  for (auto& m : a) shared.push_back(std::make_shared<const Matrix>(std::move(m)));
  return std::make_shared<QuadraticProblem>(std::move(shared), std::move(b));
}

ProblemPtr make_shared_hessian_quadratic(Matrix a, Vector b, std::size_t n, double noise,
                                         std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("quadratic problem: n must be >= 1");
  const std::size_t d = b.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise > 0.0 ? noise : 1.0);
  std::vector<Vector> offsets(n, Vector(d));
  Vector mean(d);
  if (noise > 0.0) {
    for (auto& o : offsets) {
      for (double& v : o) v = normal(rng);
      axpy_inplace(1.0 / static_cast<double>(n), o, mean.span());
    }
  }
  for (auto& o : offsets) {
    o -= mean;
    o += b;
  }
  auto shared = std::make_shared<const Matrix>(std::move(a));
  std::vector<std::shared_ptr<const Matrix>> mats(n, shared);
  return std::make_shared<QuadraticProblem>(std::move(mats), std::move(offsets));
}

ProblemPtr make_double_well(std::size_t n, std::size_t d, double shift_scale, std::uint64_t seed,
                            double box) {
  if (n == 0) throw std::invalid_argument("double well: n must be >= 1");
  Matrix c(n, d);
  if (shift_scale != 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : c.flat()) v = shift_scale * normal(rng);
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += c(i, j);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) c(i, j) -= mean;
    }
  }
  return std::make_shared<DoubleWellProblem>(std::move(c), box);
}

ProblemPtr make_double_well_from_shifts(Matrix shifts, double box) {
  return std::make_shared<DoubleWellProblem>(std::move(shifts), box);
}

}  // namespace vrcn
