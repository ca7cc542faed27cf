#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clicksim/errors.hpp"
#include "clicksim/rng.hpp"

namespace clicksim::num {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Parameters

// A value tensor paired with a gradient buffer of identical shape.
// Vectors are stored as single-column matrices.
struct Param {
  Mat value;
  Mat grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Mat::Zero(rows, cols);
    grad = Mat::Zero(rows, cols);
  }

  void init_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                    double bound = 0.1) {
    resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i)
        value(i, j) = rng.uniform(-bound, bound);
  }

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

// Ordered non-owning registry of named parameters. Iteration order is
// registration order, which keeps optimizer sweeps, serialization and
// probe selection deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Param& p);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::size_t count() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Param& param(std::size_t i) { return *entries_[i].second; }
  const Param& param(std::size_t i) const { return *entries_[i].second; }

  void zero_grads();
  Eigen::Index total_size() const;
  bool all_finite() const;

 private:
  std::vector<std::pair<std::string, Param*>> entries_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Dense ops and activations

// Wx + b with shape checks.
Vec affine(const Mat& w, const Vec& x, const Vec& b);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
Vec sigmoid(const Vec& x);
Vec tanh(const Vec& x);

// Max-subtracted softmax; output sums to 1 for any finite input.
Vec softmax(const Vec& v);

// Inverted dropout mask: each entry is 0 with probability `rate`,
// else 1/(1-rate). rate == 0 gives all-ones.
Vec dropout_mask(Eigen::Index n, double rate, Rng& rng);

// ---------------------------------------------------------------------------
// GRU cell

struct GruCellParams {
  int input_size = 0;
  int hidden_size = 0;
  Param w_update, w_reset, w_cand;  // input-to-hidden, (hidden x input)
  Param u_update, u_reset, u_cand;  // hidden-to-hidden, (hidden x hidden)
  Param b_update, b_reset, b_cand;  // (hidden x 1)

  void init(int input, int hidden, Rng& rng);
  void register_into(ParamStore& store, const std::string& prefix);
};

struct GruCache {
  Vec x, h_prev;
  Vec update, reset, cand;  // post-activation gate values
  Vec reset_h;              // reset (.) h_prev
};

// z = sigmoid(Wz x + Uz h + bz); r = sigmoid(Wr x + Ur h + br);
// c = tanh(Wc x + Uc (r(.)h) + bc); h_new = (1-z)(.)h + z(.)c.
Vec gru_forward(const GruCellParams& p, const Vec& x, const Vec& h_prev,
                GruCache* cache = nullptr);

struct GruInputGrads {
  Vec dx;
  Vec dh_prev;
};

// Reverse-mode gradients of gru_forward; accumulates into parameter grads
// and returns cotangents for the inputs.
GruInputGrads gru_backward(GruCellParams& p, const GruCache& c, const Vec& dh_new);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;
};

class AdamState {
 public:
  std::int64_t step_count() const { return step_; }

  friend void adam_step(AdamState&, ParamStore&, const AdamConfig&);

 private:
  std::int64_t step_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> moments_;  // first, second
};

// Bias-corrected Adam update in place. The L2 term is added to gradients
// as l2 * value before the moment update.
void adam_step(AdamState& state, ParamStore& store, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckProbe {
  std::string name;
  Eigen::Index index;  // column-major flat index within the parameter
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckProbe> probes;
  double max_rel_error = 0.0;
  bool within(double tol) const { return max_rel_error < tol; }
};

// `loss(with_grads)` recomputes the loss from the current parameter values;
// when with_grads is set it must also accumulate analytic gradients into the
// store (grads are zeroed here first). The callable must be deterministic.
GradCheckReport grad_check(const std::function<double(bool with_grads)>& loss,
                           ParamStore& store, int n_probes, double tol, Rng& rng,
                           double step = 1e-5);

}  // namespace clicksim::num
