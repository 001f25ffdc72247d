#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "wlf/activation.hpp"
#include "wlf/error.hpp"
#include "wlf/mlp.hpp"

namespace wlf {

enum class TimeEmbedding { raw, sinusoidal };

/// Architecture of the scalar cotangent field s(t, x, k).
struct FieldSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths{64, 64};
  Activation activation = Activation::tanh;
  bool use_indicator = false;
  TimeEmbedding time_embedding = TimeEmbedding::raw;
  int frequencies = 0;  // sinusoidal only

  int time_width() const { return time_embedding == TimeEmbedding::raw ? 1 : 2 * frequencies; }
  int total_input_width() const { return input_dim + time_width() + (use_indicator ? 1 : 0); }

  void validate() const {
    if (input_dim <= 0) throw ConfigError("field input_dim must be positive");
    if (hidden_widths.empty()) throw ConfigError("field hidden_widths must not be empty");
    for (int w : hidden_widths)
      if (w <= 0) throw ConfigError("field hidden widths must be positive");
    if (time_embedding == TimeEmbedding::sinusoidal && frequencies <= 0)
      throw ConfigError("sinusoidal time embedding needs frequencies > 0");
  }

  MlpLayout layout() const {
    validate();
    return MlpLayout(total_input_width(), hidden_widths, 1);
  }

  bool operator==(const FieldSpec&) const = default;
};

struct FieldParams {
  FieldSpec spec;
  Eigen::VectorXd theta;
};

/// Derivatives of the field at one point.
struct FieldEval {
  double value = 0;
  Eigen::VectorXd grad_x;
  double dt = 0;
  std::optional<double> laplacian;
};

/// What an evaluation must produce beyond the value.
struct Needs {
  bool first = true;       // grad_x and dt
  bool laplacian = false;  // implies first
};

/// Field quantities for a batch, one sample per column of grad_x.
struct FieldEvalBatch {
  Eigen::VectorXd value;
  Points grad_x;
  Eigen::VectorXd dt;
  std::optional<Eigen::VectorXd> laplacian;

  Eigen::Index size() const { return value.size(); }

  FieldEval at(Eigen::Index i) const {
    FieldEval e;
    e.value = value(i);
    if (grad_x.cols() > 0) e.grad_x = grad_x.col(i);
    if (dt.size() > 0) e.dt = dt(i);
    if (laplacian) e.laplacian = (*laplacian)(i);
    return e;
  }
};

/// Per-sample coefficients of a scalar aggregate
///   sum_i value_i*s + <grad_x_i, grad s> + dt_i*ds/dt + laplacian_i*lap s.
/// Empty members stand for zero.
struct FieldCotangent {
  Eigen::VectorXd value;
  Points grad_x;
  Eigen::VectorXd dt;
  Eigen::VectorXd laplacian;
};

/// Time features and their time derivative.
inline void embed_time(const FieldSpec& spec, double t, Eigen::Ref<Eigen::VectorXd> feat,
                       Eigen::Ref<Eigen::VectorXd> dfeat) {
  if (spec.time_embedding == TimeEmbedding::raw) {
    feat(0) = t;
    dfeat(0) = 1.0;
    return;
  }
  for (int f = 0; f < spec.frequencies; ++f) {
    const double w = std::numbers::pi * (f + 1);
    feat(2 * f) = std::sin(w * t);
    feat(2 * f + 1) = std::cos(w * t);
    dfeat(2 * f) = w * std::cos(w * t);
    dfeat(2 * f + 1) = -w * std::sin(w * t);
  }
}

/// Global-time indicator 1[t < 0.5].
inline double time_indicator(double t) { return t < 0.5 ? 1.0 : 0.0; }

inline FieldParams init_params(const FieldSpec& spec, std::uint64_t seed) {
  return {spec, spec.layout().glorot(seed)};
}

namespace detail {

inline void check_batch(const FieldParams& p, const Eigen::VectorXd& t, const Points& x,
                        const Eigen::VectorXd* k) {
  if (x.rows() != p.spec.input_dim)
    throw ContractError("field batch has " + std::to_string(x.rows()) + " coordinates, expected " +
                        std::to_string(p.spec.input_dim));
  if (t.size() != x.cols()) throw ContractError("field batch: time and state counts differ");
  if (k && k->size() != x.cols()) throw ContractError("field batch: indicator count differs");
  if (p.theta.size() != p.spec.layout().parameter_count())
    throw ContractError("field parameter vector does not match its spec");
  if (!x.allFinite() || !t.allFinite()) throw NumericError("field batch contains non-finite input");
}

}  // namespace detail

/// Forward pass with cached intermediates for exact first derivatives and
/// the spatial Laplacian, propagated layer by layer (forward-mode jets).
///
/// Tangent directions are the d spatial axes followed by time, stacked as
/// column blocks of width n. The tape borrows `params`, which must outlive it.
class FieldTape {
 public:
  FieldTape(const FieldParams& params, const Eigen::VectorXd& t, const Points& x,
            const Eigen::VectorXd* k, Needs needs)
      : params_(&params), layout_(params.spec.layout()), needs_(needs) {
    if (needs_.laplacian) needs_.first = true;
    detail::check_batch(params, t, x, k);
    const FieldSpec& spec = params.spec;
    n_ = x.cols();
    d_ = spec.input_dim;
    dirs_ = d_ + 1;
    const Eigen::Index m = spec.total_input_width();
    const int tw = spec.time_width();

    Eigen::MatrixXd z(m, n_);
    z.topRows(d_) = x;
    Eigen::MatrixXd dtime(tw, n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      Eigen::VectorXd f(tw), df(tw);
      embed_time(spec, t(i), f, df);
      z.block(d_, i, tw, 1) = f;
      dtime.col(i) = df;
    }
    if (spec.use_indicator) {
      for (Eigen::Index i = 0; i < n_; ++i) z(m - 1, i) = k ? (*k)(i) : time_indicator(t(i));
    }

    Eigen::MatrixXd h = std::move(z);
    Eigen::MatrixXd hd;
    Eigen::MatrixXd lap;
    if (needs_.first) {
      hd = Eigen::MatrixXd::Zero(m, n_ * dirs_);
      for (Eigen::Index j = 0; j < d_; ++j) hd.block(j, j * n_, 1, n_).setOnes();
      hd.block(d_, d_ * n_, tw, n_) = dtime;
    }

    const std::size_t hidden = layout_.depth() - 1;
    for (std::size_t l = 0; l < hidden; ++l) {
      const auto W = layout_.weight(params.theta, l);
      Layer c;
      Eigen::MatrixXd a = W * h;
      a.colwise() += layout_.bias(params.theta, l);
      Eigen::MatrixXd y;
      activate(spec.activation, a, y, needs_.first ? &c.p1 : nullptr, needs_.first ? &c.p2 : nullptr,
               needs_.laplacian ? &c.p3 : nullptr);
      c.in = std::move(h);
      h = std::move(y);
      if (needs_.first) {
        c.ad = W * hd;
        Eigen::MatrixXd next(c.ad.rows(), c.ad.cols());
        for (Eigen::Index j = 0; j < dirs_; ++j)
          next.middleCols(j * n_, n_) = c.p1.cwiseProduct(c.ad.middleCols(j * n_, n_));
        c.ind = std::move(hd);
        hd = std::move(next);
      }
      if (needs_.laplacian) {
        c.sq = Eigen::MatrixXd::Zero(c.p1.rows(), n_);
        for (Eigen::Index j = 0; j < d_; ++j) c.sq += c.ad.middleCols(j * n_, n_).cwiseAbs2();
        if (l == 0)
          c.am = Eigen::MatrixXd::Zero(c.p1.rows(), n_);
        else
          c.am = W * lap;
        Eigen::MatrixXd next = c.p2.cwiseProduct(c.sq) + c.p1.cwiseProduct(c.am);
        c.inl = std::move(lap);
        lap = std::move(next);
      }
      layers_.push_back(std::move(c));
    }

    const auto c_out = layout_.weight(params.theta, hidden);  // 1 x w
    const double b_out = layout_.bias(params.theta, hidden)(0);
    eval_.value = (c_out * h).transpose();
    eval_.value.array() += b_out;
    if (needs_.first) {
      Eigen::RowVectorXd dall = c_out * hd;
      eval_.grad_x.resize(d_, n_);
      for (Eigen::Index j = 0; j < d_; ++j) eval_.grad_x.row(j) = dall.segment(j * n_, n_);
      eval_.dt = dall.segment(d_ * n_, n_).transpose();
    }
    if (needs_.laplacian) eval_.laplacian = (c_out * lap).transpose();
    top_h_ = std::move(h);
    top_hd_ = std::move(hd);
    top_lap_ = std::move(lap);
  }

  const FieldEvalBatch& eval() const { return eval_; }
  const Needs& needs() const { return needs_; }
  Eigen::Index size() const { return n_; }

  /// Reverse pass for the aggregate described by `w`. Returns the parameter
  /// gradient; fills `x_bar` (d x n) with the input gradient when non-null.
  Eigen::VectorXd backward(const FieldCotangent& w, Points* x_bar = nullptr) const {
    const bool has_v = w.value.size() > 0;
    const bool has_g = w.grad_x.size() > 0;
    const bool has_t = w.dt.size() > 0;
    const bool has_l = w.laplacian.size() > 0;
    if ((has_g || has_t) && !needs_.first) throw ContractError("cotangent on derivatives needs a first-order tape");
    if (has_l && !needs_.laplacian) throw ContractError("cotangent on the Laplacian needs a Laplacian tape");
    if (has_v && w.value.size() != n_) throw ContractError("cotangent value weights have wrong length");
    if (has_g && (w.grad_x.rows() != d_ || w.grad_x.cols() != n_))
      throw ContractError("cotangent grad_x weights have wrong shape");
    if (has_t && w.dt.size() != n_) throw ContractError("cotangent dt weights have wrong length");
    if (has_l && w.laplacian.size() != n_) throw ContractError("cotangent Laplacian weights have wrong length");

    const auto& theta = params_->theta;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(layout_.parameter_count());
    const std::size_t hidden = layout_.depth() - 1;
    const auto c_out = layout_.weight(theta, hidden);

    Eigen::RowVectorXd wv = has_v ? Eigen::RowVectorXd(w.value.transpose()) : Eigen::RowVectorXd::Zero(n_);
    Eigen::RowVectorXd wd;
    if (needs_.first) {
      wd = Eigen::RowVectorXd::Zero(n_ * dirs_);
      if (has_g)
        for (Eigen::Index j = 0; j < d_; ++j) wd.segment(j * n_, n_) = w.grad_x.row(j);
      if (has_t) wd.segment(d_ * n_, n_) = w.dt.transpose();
    }

    auto gW = layout_.weight(g, hidden);
    gW.noalias() += wv * top_h_.transpose();
    if (needs_.first) gW.noalias() += wd * top_hd_.transpose();
    if (has_l) gW.noalias() += w.laplacian.transpose() * top_lap_.transpose();
    layout_.bias(g, hidden)(0) += wv.sum();

    const Eigen::VectorXd c = c_out.transpose();
    Eigen::MatrixXd hbar = c * wv;
    Eigen::MatrixXd hdbar;
    if (needs_.first) hdbar = c * wd;
    Eigen::MatrixXd lbar;
    if (has_l) lbar = c * w.laplacian.transpose();

    for (std::size_t l = hidden; l-- > 0;) {
      const Layer& L = layers_[l];
      Eigen::MatrixXd abar = hbar.cwiseProduct(L.p1.size() ? L.p1 : slope_only(l));
      Eigen::MatrixXd adbar;
      Eigen::MatrixXd ambar;
      if (needs_.first) {
        adbar.resize(L.ad.rows(), L.ad.cols());
        for (Eigen::Index j = 0; j < dirs_; ++j) {
          auto hdj = hdbar.middleCols(j * n_, n_);
          auto adj = L.ad.middleCols(j * n_, n_);
          abar += hdj.cwiseProduct(L.p2).cwiseProduct(adj);
          adbar.middleCols(j * n_, n_) = hdj.cwiseProduct(L.p1);
          if (has_l && j < d_) adbar.middleCols(j * n_, n_) += 2.0 * lbar.cwiseProduct(L.p2).cwiseProduct(adj);
        }
      }
      if (has_l) {
        abar += lbar.cwiseProduct(L.p3.cwiseProduct(L.sq) + L.p2.cwiseProduct(L.am));
        ambar = lbar.cwiseProduct(L.p1);
      }
      auto gWl = layout_.weight(g, l);
      gWl.noalias() += abar * L.in.transpose();
      if (needs_.first) gWl.noalias() += adbar * L.ind.transpose();
      if (has_l && l > 0) gWl.noalias() += ambar * L.inl.transpose();
      layout_.bias(g, l) += abar.rowwise().sum();

      const auto W = layout_.weight(theta, l);
      if (l == 0) {
        if (x_bar) *x_bar = (W.transpose() * abar).topRows(d_);
        break;
      }
      hbar = W.transpose() * abar;
      if (needs_.first) hdbar = W.transpose() * adbar;
      if (has_l) lbar = W.transpose() * ambar;
    }
    return g;
  }

 private:
  struct Layer {
    Eigen::MatrixXd in, ind, inl;  // layer inputs: values, tangents, Laplacians
    Eigen::MatrixXd p1, p2, p3;    // activation derivatives at the pre-activation
    Eigen::MatrixXd ad;            // pre-activation tangents
    Eigen::MatrixXd am;            // W * incoming Laplacian
    Eigen::MatrixXd sq;            // sum over spatial directions of ad^2
  };

  // Value-only tapes skip p1 in the forward pass; recompute on demand.
  Eigen::MatrixXd slope_only(std::size_t l) const {
    const auto W = layout_.weight(params_->theta, l);
    Eigen::MatrixXd a = W * layers_[l].in;
    a.colwise() += layout_.bias(params_->theta, l);
    Eigen::MatrixXd y, p1;
    activate(params_->spec.activation, a, y, &p1, nullptr, nullptr);
    return p1;
  }

  const FieldParams* params_;
  MlpLayout layout_;
  Needs needs_;
  Eigen::Index n_ = 0, d_ = 0, dirs_ = 0;
  std::vector<Layer> layers_;
  Eigen::MatrixXd top_h_, top_hd_, top_lap_;
  FieldEvalBatch eval_;
};

inline FieldEvalBatch eval_batch(const FieldParams& params, const Eigen::VectorXd& t, const Points& x,
                                 const Eigen::VectorXd* k = nullptr, Needs needs = {}) {
  return FieldTape(params, t, x, k, needs).eval();
}

/// Gradient w.r.t. the parameters of the aggregate described by `w`.
inline Eigen::VectorXd grad_params(const FieldParams& params, const Eigen::VectorXd& t, const Points& x,
                                   const Eigen::VectorXd* k, const FieldCotangent& w) {
  Needs needs;
  needs.first = w.grad_x.size() > 0 || w.dt.size() > 0 || w.laplacian.size() > 0;
  needs.laplacian = w.laplacian.size() > 0;
  return FieldTape(params, t, x, k, needs).backward(w);
}

/// Builds per-sample cotangent weights from the evaluated field. The scalar
/// being differentiated must be expressible as a function of FieldEval whose
/// partials are these weights (chain rule through the field quantities).
using CotangentSelector = std::function<FieldCotangent(const FieldEvalBatch&, const Eigen::VectorXd& t)>;

/// Exact spatial gradient (d x n) of a per-sample scalar built from the
/// field's value, gradient, time partial and Laplacian. Requires second
/// derivatives of the activation, or third when the Laplacian participates.
inline Points grad_inputs(const FieldParams& params, const Eigen::VectorXd& t, const Points& x,
                          const Eigen::VectorXd* k, bool uses_laplacian, const CotangentSelector& selector) {
  const int order = uses_laplacian ? 3 : 2;
  if (max_derivative_order(params.spec.activation) < order)
    throw CapabilityError("activation lacks derivative order " + std::to_string(order));
  FieldTape tape(params, t, x, k, Needs{true, uses_laplacian});
  Points xbar;
  tape.backward(selector(tape.eval(), t), &xbar);
  return xbar;
}

}  // namespace wlf
