#include "clicksim/numkernel.hpp"

#include <algorithm>
#include <cmath>

namespace clicksim::num {

void ParamStore::add(const std::string& name, Param& p) {
  check_contract(index_.find(name) == index_.end(),
                 "ParamStore: duplicate parameter name " + name);
  check_contract(p.value.rows() == p.grad.rows() && p.value.cols() == p.grad.cols(),
                 "ParamStore: grad shape differs from value shape for " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, &p);
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  check_contract(it != index_.end(), "ParamStore: unknown parameter " + name);
  return *entries_[it->second].second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  check_contract(it != index_.end(), "ParamStore: unknown parameter " + name);
  return *entries_[it->second].second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : entries_) p->zero_grad();
}

Eigen::Index ParamStore::total_size() const {
  Eigen::Index n = 0;
  for (const auto& [name, p] : entries_) n += p->size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& [name, p] : entries_)
    if (!p->value.allFinite() || !p->grad.allFinite()) return false;
  return true;
}

Vec affine(const Mat& w, const Vec& x, const Vec& b) {
  check_contract(w.cols() == x.size(), "affine: W cols != x size");
  check_contract(w.rows() == b.size(), "affine: W rows != b size");
  return w * x + b;
}

Vec sigmoid(const Vec& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

Vec tanh(const Vec& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

Vec softmax(const Vec& v) {
  check_contract(v.size() > 0, "softmax: empty input");
  const double m = v.maxCoeff();
  Vec e = (v.array() - m).exp();
  Vec p = e / e.sum();
  // Floor keeps every entry strictly inside (0,1) even when the exponent
  // spread underflows; the distortion is at most ~1e-12 per entry.
  p = p.array().max(1e-12).min(1.0 - 1e-12);
  return p / p.sum();
}

Vec dropout_mask(Eigen::Index n, double rate, Rng& rng) {
  check_contract(rate >= 0.0 && rate < 1.0, "dropout_mask: rate must be in [0,1)");
  Vec mask = Vec::Ones(n);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < n; ++i)
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

void GruCellParams::init(int input, int hidden, Rng& rng) {
  input_size = input;
  hidden_size = hidden;
  w_update.init_uniform(hidden, input, rng);
  w_reset.init_uniform(hidden, input, rng);
  w_cand.init_uniform(hidden, input, rng);
  u_update.init_uniform(hidden, hidden, rng);
  u_reset.init_uniform(hidden, hidden, rng);
  u_cand.init_uniform(hidden, hidden, rng);
  b_update.resize(hidden, 1);
  b_reset.resize(hidden, 1);
  b_cand.resize(hidden, 1);
}

void GruCellParams::register_into(ParamStore& store, const std::string& prefix) {
  store.add(prefix + ".w_update", w_update);
  store.add(prefix + ".w_reset", w_reset);
  store.add(prefix + ".w_cand", w_cand);
  store.add(prefix + ".u_update", u_update);
  store.add(prefix + ".u_reset", u_reset);
  store.add(prefix + ".u_cand", u_cand);
  store.add(prefix + ".b_update", b_update);
  store.add(prefix + ".b_reset", b_reset);
  store.add(prefix + ".b_cand", b_cand);
}

Vec gru_forward(const GruCellParams& p, const Vec& x, const Vec& h_prev,
                GruCache* cache) {
  check_contract(x.size() == p.input_size, "gru_forward: x size != input_size");
  check_contract(h_prev.size() == p.hidden_size,
                 "gru_forward: h_prev size != hidden_size");

  Vec z = sigmoid(p.w_update.value * x + p.u_update.value * h_prev + p.b_update.value.col(0));
  Vec r = sigmoid(p.w_reset.value * x + p.u_reset.value * h_prev + p.b_reset.value.col(0));
  Vec rh = r.cwiseProduct(h_prev);
  Vec c = tanh(Vec(p.w_cand.value * x + p.u_cand.value * rh + p.b_cand.value.col(0)));
  Vec h_new = (Vec::Ones(p.hidden_size) - z).cwiseProduct(h_prev) + z.cwiseProduct(c);

  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->update = z;
    cache->reset = r;
    cache->cand = c;
    cache->reset_h = rh;
  }
  return h_new;
}

GruInputGrads gru_backward(GruCellParams& p, const GruCache& c, const Vec& dh_new) {
  check_contract(c.x.size() == p.input_size && c.h_prev.size() == p.hidden_size,
                 "gru_backward: cache does not match cell shape");
  check_contract(dh_new.size() == p.hidden_size, "gru_backward: dh_new size");

  const Vec& z = c.update;
  const Vec& r = c.reset;
  const Vec& cand = c.cand;

  // h_new = (1-z)(.)h_prev + z(.)cand
  Vec dcand = dh_new.cwiseProduct(z);
  Vec dz = dh_new.cwiseProduct(cand - c.h_prev);
  Vec dh_prev = dh_new.cwiseProduct(Vec::Ones(p.hidden_size) - z);

  // cand = tanh(a_c), a_c = Wc x + Uc (r(.)h_prev) + bc
  Vec da_c = dcand.cwiseProduct(Vec::Ones(p.hidden_size) - cand.cwiseProduct(cand));
  p.w_cand.grad += da_c * c.x.transpose();
  p.u_cand.grad += da_c * c.reset_h.transpose();
  p.b_cand.grad.col(0) += da_c;
  Vec drh = p.u_cand.value.transpose() * da_c;
  Vec dr = drh.cwiseProduct(c.h_prev);
  dh_prev += drh.cwiseProduct(r);

  // z = sigmoid(a_z)
  Vec da_z = dz.cwiseProduct(z.cwiseProduct(Vec::Ones(p.hidden_size) - z));
  p.w_update.grad += da_z * c.x.transpose();
  p.u_update.grad += da_z * c.h_prev.transpose();
  p.b_update.grad.col(0) += da_z;
  dh_prev += p.u_update.value.transpose() * da_z;

  // r = sigmoid(a_r)
  Vec da_r = dr.cwiseProduct(r.cwiseProduct(Vec::Ones(p.hidden_size) - r));
  p.w_reset.grad += da_r * c.x.transpose();
  p.u_reset.grad += da_r * c.h_prev.transpose();
  p.b_reset.grad.col(0) += da_r;
  dh_prev += p.u_reset.value.transpose() * da_r;

  GruInputGrads g;
  g.dx = p.w_cand.value.transpose() * da_c + p.w_update.value.transpose() * da_z +
         p.w_reset.value.transpose() * da_r;
  g.dh_prev = std::move(dh_prev);
  return g;
}

void adam_step(AdamState& state, ParamStore& store, const AdamConfig& cfg) {
  check_contract(cfg.lr > 0.0, "adam_step: lr must be positive");
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double corr1 = 1.0 - std::pow(cfg.beta1, t);
  const double corr2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < store.count(); ++i) {
    Param& p = store.param(i);
    auto& [m, v] = state.moments_[store.name(i)];
    if (m.size() == 0) {
      m = Mat::Zero(p.value.rows(), p.value.cols());
      v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    Mat g = p.grad;
    if (cfg.l2 != 0.0) g += cfg.l2 * p.value;

    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);

    Mat m_hat = m / corr1;
    Mat v_hat = v / corr2;
    p.value.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
}

GradCheckReport grad_check(const std::function<double(bool with_grads)>& loss,
                           ParamStore& store, int n_probes, double tol, Rng& rng,
                           double step) {
  store.zero_grads();
  loss(true);

  // Snapshot analytic gradients; probing must not depend on them being live.
  std::vector<Mat> analytic;
  analytic.reserve(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) analytic.push_back(store.param(i).grad);

  // Probe selection weighted by parameter size.
  const Eigen::Index total = store.total_size();
  check_contract(total > 0, "grad_check: empty store");

  GradCheckReport report;
  for (int probe = 0; probe < n_probes; ++probe) {
    Eigen::Index flat = static_cast<Eigen::Index>(
        rng.uniform() * static_cast<double>(total));
    flat = std::min(flat, total - 1);
    std::size_t pi = 0;
    while (flat >= store.param(pi).size()) {
      flat -= store.param(pi).size();
      ++pi;
    }
    Param& p = store.param(pi);
    double* entry = p.value.data() + flat;
    const double saved = *entry;

    *entry = saved + step;
    const double up = loss(false);
    *entry = saved - step;
    const double down = loss(false);
    *entry = saved;

    GradCheckProbe pr;
    pr.name = store.name(pi);
    pr.index = flat;
    pr.analytic = analytic[pi].data()[flat];
    pr.numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(pr.analytic), std::abs(pr.numeric), 1e-6});
    pr.rel_error = std::abs(pr.analytic - pr.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, pr.rel_error);
    report.probes.push_back(std::move(pr));
  }

  // Restore analytic grads so callers can keep using them.
  store.zero_grads();
  for (std::size_t i = 0; i < store.count(); ++i) store.param(i).grad = analytic[i];
  (void)tol;
  return report;
}

}  // namespace clicksim::num
