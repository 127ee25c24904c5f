#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "v2p/common.hpp"
#include "v2p/rng.hpp"

namespace v2p {

// Actor-critic MLP: shared trunk of two tanh hidden layers, a mean head, a
// state-independent log-std vector and a value head. All parameters live in
// one flat vector so the optimizer, checkpointing and gradient checks can
// treat the model as a single array.
template <typename S>
class PolicyNet {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  using MapM = Eigen::Map<Mat>;
  using MapV = Eigen::Map<Vec>;
  using CMapM = Eigen::Map<const Mat>;
  using CMapV = Eigen::Map<const Vec>;

  static constexpr double kLogStdInit = -0.7;
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  PolicyNet() = default;

  PolicyNet(int obs_dim, int act_dim, int h0, int h1, uint64_t seed)
      : obs_dim_(obs_dim), act_dim_(act_dim), h0_(h0), h1_(h1) {
    theta_.assign(param_count(), S(0));
    Rng rng(seed);
    orthogonal_fill(W0(), std::sqrt(2.0), rng);
    orthogonal_fill(W1(), std::sqrt(2.0), rng);
    orthogonal_fill(Wm(), 0.01, rng);
    orthogonal_fill(Wv(), 1.0, rng);
    log_std().setConstant(static_cast<S>(kLogStdInit));
  }

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  int h0() const { return h0_; }
  int h1() const { return h1_; }

  size_t param_count() const {
    return static_cast<size_t>(h0_) * obs_dim_ + h0_ + static_cast<size_t>(h1_) * h0_ + h1_ +
           static_cast<size_t>(act_dim_) * h1_ + act_dim_ + h1_ + 1 + act_dim_;
  }

  std::vector<S>& theta() { return theta_; }
  const std::vector<S>& theta() const { return theta_; }

  // Parameter segments (column-major matrices over the flat buffer).
  MapM W0() { return {theta_.data() + off(0), h0_, obs_dim_}; }
  MapV b0() { return {theta_.data() + off(1), h0_}; }
  MapM W1() { return {theta_.data() + off(2), h1_, h0_}; }
  MapV b1() { return {theta_.data() + off(3), h1_}; }
  MapM Wm() { return {theta_.data() + off(4), act_dim_, h1_}; }
  MapV bm() { return {theta_.data() + off(5), act_dim_}; }
  MapM Wv() { return {theta_.data() + off(6), 1, h1_}; }
  MapV bv() { return {theta_.data() + off(7), 1}; }
  MapV log_std() { return {theta_.data() + off(8), act_dim_}; }
  CMapM W0() const { return {theta_.data() + off(0), h0_, obs_dim_}; }
  CMapV b0() const { return {theta_.data() + off(1), h0_}; }
  CMapM W1() const { return {theta_.data() + off(2), h1_, h0_}; }
  CMapV b1() const { return {theta_.data() + off(3), h1_}; }
  CMapM Wm() const { return {theta_.data() + off(4), act_dim_, h1_}; }
  CMapV bm() const { return {theta_.data() + off(5), act_dim_}; }
  CMapM Wv() const { return {theta_.data() + off(6), 1, h1_}; }
  CMapV bv() const { return {theta_.data() + off(7), 1}; }
  CMapV log_std() const { return {theta_.data() + off(8), act_dim_}; }

  size_t log_std_offset() const { return off(8); }

  struct Forward {
    Mat x;     // B x obs
    Mat h0;    // B x h0
    Mat h1;    // B x h1
    Mat mean;  // B x act
    Vec value; // B
  };

  Forward forward(const Mat& x) const {
    if (x.cols() != obs_dim_) throw ContractError("PolicyNet: observation width mismatch");
    Forward f;
    f.x = x;
    f.h0.noalias() = x * W0().transpose();
    f.h0.rowwise() += b0().transpose();
    f.h0 = f.h0.array().tanh();
    f.h1.noalias() = f.h0 * W1().transpose();
    f.h1.rowwise() += b1().transpose();
    f.h1 = f.h1.array().tanh();
    f.mean.noalias() = f.h1 * Wm().transpose();
    f.mean.rowwise() += bm().transpose();
    f.value.noalias() = f.h1 * Wv().transpose();
    f.value.array() += bv()(0);
    return f;
  }

  // Accumulates gradients into `grad` (same layout as theta) given the loss
  // gradients w.r.t. mean, value and log_std.
  void backward(const Forward& f, const Mat& d_mean, const Vec& d_value, const Vec& d_log_std,
                std::vector<S>& grad) const {
    if (grad.size() != param_count()) grad.assign(param_count(), S(0));
    MapM gW0{grad.data() + off(0), h0_, obs_dim_};
    MapV gb0{grad.data() + off(1), h0_};
    MapM gW1{grad.data() + off(2), h1_, h0_};
    MapV gb1{grad.data() + off(3), h1_};
    MapM gWm{grad.data() + off(4), act_dim_, h1_};
    MapV gbm{grad.data() + off(5), act_dim_};
    MapM gWv{grad.data() + off(6), 1, h1_};
    MapV gbv{grad.data() + off(7), 1};
    MapV gls{grad.data() + off(8), act_dim_};

    gWm.noalias() += d_mean.transpose() * f.h1;
    gbm.noalias() += d_mean.colwise().sum().transpose();
    gWv.noalias() += d_value.transpose() * f.h1;
    gbv(0) += d_value.sum();
    gls += d_log_std;

    Mat d_h1 = d_mean * Wm();
    d_h1.noalias() += d_value * Wv();
    Mat d_z1 = d_h1.array() * (S(1) - f.h1.array().square());
    gW1.noalias() += d_z1.transpose() * f.h0;
    gb1.noalias() += d_z1.colwise().sum().transpose();

    Mat d_h0 = d_z1 * W1();
    Mat d_z0 = d_h0.array() * (S(1) - f.h0.array().square());
    gW0.noalias() += d_z0.transpose() * f.x;
    gb0.noalias() += d_z0.colwise().sum().transpose();
  }

  void clamp_log_std() {
    auto ls = log_std();
    for (int k = 0; k < act_dim_; ++k)
      ls(k) = std::clamp(ls(k), static_cast<S>(kLogStdMin), static_cast<S>(kLogStdMax));
  }

  bool finite() const {
    for (S v : theta_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  PolicyNet<T> cast() const {
    PolicyNet<T> out(obs_dim_, act_dim_, h0_, h1_, 0);
    for (size_t k = 0; k < theta_.size(); ++k) out.theta()[k] = static_cast<T>(theta_[k]);
    return out;
  }

 private:
  size_t off(int seg) const {
    const size_t sizes[] = {static_cast<size_t>(h0_) * obs_dim_,
                            static_cast<size_t>(h0_),
                            static_cast<size_t>(h1_) * h0_,
                            static_cast<size_t>(h1_),
                            static_cast<size_t>(act_dim_) * h1_,
                            static_cast<size_t>(act_dim_),
                            static_cast<size_t>(h1_),
                            1,
                            static_cast<size_t>(act_dim_)};
    size_t o = 0;
    for (int k = 0; k < seg; ++k) o += sizes[k];
    return o;
  }

  void orthogonal_fill(MapM w, double gain, Rng& rng) {
    const int rows = static_cast<int>(w.rows());
    const int cols = static_cast<int>(w.cols());
    Eigen::MatrixXd g(std::max(rows, cols), std::min(rows, cols));
    for (int c = 0; c < g.cols(); ++c)
      for (int r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    // canonical sign: positive diagonal of R
    Eigen::MatrixXd r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (int c = 0; c < q.cols(); ++c)
      if (r(c, c) < 0) q.col(c) = -q.col(c);
    Eigen::MatrixXd m = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
    for (int c = 0; c < cols; ++c)
      for (int rr = 0; rr < rows; ++rr) w(rr, c) = static_cast<S>(gain * m(rr, c));
  }

  int obs_dim_ = 0, act_dim_ = 0, h0_ = 0, h1_ = 0;
  std::vector<S> theta_;
};

// Adam with global-norm gradient clipping and post-step log-std projection.
template <typename S>
class Adam {
 public:
  Adam(size_t n, double lr, double clip_norm)
      : lr_(lr), clip_norm_(clip_norm), m_(n, S(0)), v_(n, S(0)) {}

  void step(PolicyNet<S>& net, std::vector<S>& grad) {
    double norm2 = 0;
    for (S g : grad) norm2 += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(norm2);
    const double scale = (clip_norm_ > 0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    auto& theta = net.theta();
    for (size_t k = 0; k < theta.size(); ++k) {
      const double g = static_cast<double>(grad[k]) * scale;
      m_[k] = static_cast<S>(beta1_ * m_[k] + (1 - beta1_) * g);
      v_[k] = static_cast<S>(beta2_ * v_[k] + (1 - beta2_) * g * g);
      const double mhat = m_[k] / c1;
      const double vhat = v_[k] / c2;
      theta[k] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
    net.clamp_log_std();
  }

 private:
  double lr_;
  double clip_norm_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<S> m_, v_;
};

}  // namespace v2p
