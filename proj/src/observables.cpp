#include "kausal/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace kausal {

namespace {

constexpr double kCodeFloor = 1e-300;
const double kCodeCeil = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_input(const FeatureMap& map, std::span<const double> x, std::size_t expected) {
  if (x.size() != expected)
    throw std::invalid_argument(to_string(map.kind()) + " map: input has dimension " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(expected));
}

}  // namespace

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::identity: return "identity";
    case FeatureKind::rff: return "rff";
    case FeatureKind::polynomial: return "polynomial";
    case FeatureKind::time_delay: return "time_delay";
    case FeatureKind::mlp: return "mlp";
    case FeatureKind::cnn: return "cnn";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  for (FeatureKind k : {FeatureKind::identity, FeatureKind::rff, FeatureKind::polynomial,
                        FeatureKind::time_delay, FeatureKind::mlp, FeatureKind::cnn})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown feature map kind: " + name);
}

std::vector<double> FeatureMap::gather(const Matrix& series, std::size_t row) const {
  if (series.cols() != input_dim())
    throw std::invalid_argument("FeatureMap::gather: series dimension mismatch");
  auto r = series.row(row);
  return {r.begin(), r.end()};
}

double kernel_eval(const FeatureMap& map, std::span<const double> x, std::span<const double> y) {
  const std::vector<double> fx = map.apply(x);
  const std::vector<double> fy = map.apply(y);
  double s = 0.0;
  for (std::size_t i = 0; i < fx.size(); ++i) s += fx[i] * fy[i];
  return s;
}

void adamw_step(std::span<double> params, std::span<const double> gradients, AdamWState& state,
                double learning_rate, double weight_decay) {
  if (params.size() != gradients.size() || params.size() != state.first_moment.size())
    throw std::invalid_argument("adamw_step: shape mismatch");
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * gradients[i];
    v = b2 * v + (1.0 - b2) * gradients[i] * gradients[i];
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] -= learning_rate * (m_hat / (std::sqrt(v_hat) + state.epsilon)) +
                 learning_rate * weight_decay * params[i];
  }
}

// ---------------------------------------------------------------------------
// Prescribed dictionaries
// ---------------------------------------------------------------------------

namespace {

class IdentityMap final : public FeatureMap {
 public:
  explicit IdentityMap(std::size_t dim) : dim_(dim) {}
  FeatureKind kind() const override { return FeatureKind::identity; }
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> apply(std::span<const double> x) const override {
    check_input(*this, x, dim_);
    return {x.begin(), x.end()};
  }
  nlohmann::json to_json() const override {
    return {{"format", "kausal-feature-map"}, {"version", 1}, {"kind", "identity"},
            {"input_dim", dim_}};
  }
  std::unique_ptr<FeatureMap> clone() const override { return std::make_unique<IdentityMap>(*this); }

 private:
  std::size_t dim_;
};

class RffMap final : public FeatureMap {
 public:
  RffMap(std::size_t dim, std::size_t m, double lengthscale, std::uint64_t seed)
      : dim_(dim), m_(m), lengthscale_(lengthscale), seed_(seed), w_(m, dim), b_(m) {
    if (!(lengthscale > 0.0)) throw std::invalid_argument("rff: lengthscale must be positive");
    SeededRng rng(seed);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < dim; ++j) w_(i, j) = rng.normal() / lengthscale;
    for (std::size_t i = 0; i < m; ++i) b_[i] = 2.0 * std::numbers::pi * rng.uniform();
  }
  RffMap(std::size_t dim, std::size_t m, double lengthscale, std::uint64_t seed, Matrix w,
         std::vector<double> b)
      : dim_(dim), m_(m), lengthscale_(lengthscale), seed_(seed), w_(std::move(w)),
        b_(std::move(b)) {}

  FeatureKind kind() const override { return FeatureKind::rff; }
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return m_; }
  double lengthscale() const { return lengthscale_; }

  std::vector<double> apply(std::span<const double> x) const override {
    check_input(*this, x, dim_);
    std::vector<double> out(m_);
    const double scale = std::sqrt(2.0 / static_cast<double>(m_));
    for (std::size_t i = 0; i < m_; ++i) {
      const double* wi = w_.data() + i * dim_;
      double z = b_[i];
      for (std::size_t j = 0; j < dim_; ++j) z += wi[j] * x[j];
      out[i] = scale * std::cos(z);
    }
    return out;
  }

  nlohmann::json to_json() const override {
    return {{"format", "kausal-feature-map"}, {"version", 1}, {"kind", "rff"},
            {"input_dim", dim_}, {"output_dim", m_}, {"lengthscale", lengthscale_},
            {"seed", seed_},
            {"frequencies", std::vector<double>(w_.data(), w_.data() + w_.size())},
            {"phases", b_}};
  }
  std::unique_ptr<FeatureMap> clone() const override { return std::make_unique<RffMap>(*this); }

 private:
  std::size_t dim_;
  std::size_t m_;
  double lengthscale_;
  std::uint64_t seed_;
  Matrix w_;
  std::vector<double> b_;
};

class PolynomialMap final : public FeatureMap {
 public:
  PolynomialMap(std::size_t dim, std::size_t degree) : dim_(dim), degree_(degree) {
    std::vector<std::size_t> exponents(dim, 0);
    enumerate(exponents, 0, degree);
  }

  FeatureKind kind() const override { return FeatureKind::polynomial; }
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return monomials_.size() / std::max<std::size_t>(dim_, 1); }

  std::vector<double> apply(std::span<const double> x) const override {
    check_input(*this, x, dim_);
    const std::size_t count = output_dim();
    std::vector<double> out(count, 1.0);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t* e = monomials_.data() + k * dim_;
      double v = 1.0;
      for (std::size_t j = 0; j < dim_; ++j)
        for (std::size_t p = 0; p < e[j]; ++p) v *= x[j];
      out[k] = v;
    }
    return out;
  }

  nlohmann::json to_json() const override {
    return {{"format", "kausal-feature-map"}, {"version", 1}, {"kind", "polynomial"},
            {"input_dim", dim_}, {"degree", degree_}};
  }
  std::unique_ptr<FeatureMap> clone() const override {
    return std::make_unique<PolynomialMap>(*this);
  }

 private:
  // Exponent vectors for all monomials of total degree <= degree, constant
  // first, then graded by degree.
  void enumerate(std::vector<std::size_t>& exps, std::size_t var, std::size_t remaining) {
    if (var == dim_) {
      monomials_.insert(monomials_.end(), exps.begin(), exps.end());
      return;
    }
    for (std::size_t e = 0; e <= remaining; ++e) {
      exps[var] = e;
      enumerate(exps, var + 1, remaining - e);
    }
    exps[var] = 0;
  }

  std::size_t dim_;
  std::size_t degree_;
  std::vector<std::size_t> monomials_;
};

class TimeDelayMap final : public FeatureMap {
 public:
  TimeDelayMap(std::size_t dim, std::size_t delays, std::size_t lag)
      : dim_(dim), delays_(delays), lag_(lag) {
    if (lag < 1) throw std::invalid_argument("time_delay: lag must be >= 1");
  }

  FeatureKind kind() const override { return FeatureKind::time_delay; }
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return (delays_ + 1) * dim_; }
  std::size_t history() const override { return delays_ * lag_; }

  std::vector<double> apply(std::span<const double> x) const override {
    check_input(*this, x, output_dim());
    return {x.begin(), x.end()};
  }

  std::vector<double> gather(const Matrix& series, std::size_t row) const override {
    if (series.cols() != dim_)
      throw std::invalid_argument("time_delay: series dimension mismatch");
    if (row < history())
      throw std::invalid_argument("time_delay: row " + std::to_string(row) +
                                  " lacks full history");
    std::vector<double> out;
    out.reserve(output_dim());
    for (std::size_t q = 0; q <= delays_; ++q) {
      auto r = series.row(row - q * lag_);
      out.insert(out.end(), r.begin(), r.end());
    }
    return out;
  }

  nlohmann::json to_json() const override {
    return {{"format", "kausal-feature-map"}, {"version", 1}, {"kind", "time_delay"},
            {"input_dim", dim_}, {"delays", delays_}, {"lag", lag_}};
  }
  std::unique_ptr<FeatureMap> clone() const override {
    return std::make_unique<TimeDelayMap>(*this);
  }

 private:
  std::size_t dim_;
  std::size_t delays_;
  std::size_t lag_;
};

// ---------------------------------------------------------------------------
// MLP encoder-decoder
// ---------------------------------------------------------------------------

struct AffineShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;  // W at offset, b at offset + in*out
  std::size_t size() const { return in * out + out; }
};

class MlpMap final : public TrainableMap {
 public:
  MlpMap(std::size_t dim, std::vector<std::size_t> hidden, std::size_t code_dim,
         std::uint64_t seed)
      : dim_(dim), hidden_(std::move(hidden)), code_dim_(code_dim), seed_(seed) {
    std::vector<std::size_t> enc{dim_};
    enc.insert(enc.end(), hidden_.begin(), hidden_.end());
    enc.push_back(code_dim_);
    std::vector<std::size_t> dec{code_dim_};
    dec.insert(dec.end(), hidden_.rbegin(), hidden_.rend());
    dec.push_back(dim_);

    std::size_t offset = 0;
    auto add_layers = [&](const std::vector<std::size_t>& dims, std::vector<AffineShape>& out) {
      for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        out.push_back({dims[l], dims[l + 1], offset});
        offset += out.back().size();
      }
    };
    add_layers(enc, enc_layers_);
    add_layers(dec, dec_layers_);
    params_.assign(offset, 0.0);
    mean_.assign(dim_, 0.0);
    inv_std_.assign(dim_, 1.0);
    glorot_init(seed);
  }

  FeatureKind kind() const override { return FeatureKind::mlp; }
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return code_dim_; }

  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }

  void set_standardization(const Matrix& samples) override {
    if (samples.cols() != dim_)
      throw std::invalid_argument("mlp: standardization sample dimension mismatch");
    for (std::size_t j = 0; j < dim_; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < samples.rows(); ++i) m += samples(i, j);
      m /= static_cast<double>(samples.rows());
      double var = 0.0;
      for (std::size_t i = 0; i < samples.rows(); ++i) {
        const double d = samples(i, j) - m;
        var += d * d;
      }
      var /= static_cast<double>(samples.rows());
      mean_[j] = m;
      inv_std_[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }

  std::vector<double> apply(std::span<const double> x) const override {
    check_input(*this, x, dim_);
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t j = 0; j < dim_; ++j) a[j] = (a[j] - mean_[j]) * inv_std_[j];
    for (const AffineShape& layer : enc_layers_) a = affine_sigmoid(layer, a);
    for (double& v : a) v = std::clamp(v, kCodeFloor, kCodeCeil);
    return a;
  }

  std::vector<double> decode(std::span<const double> code) const override {
    if (code.size() != code_dim_) throw std::invalid_argument("mlp: code dimension mismatch");
    std::vector<double> a(code.begin(), code.end());
    for (std::size_t l = 0; l < dec_layers_.size(); ++l)
      a = l + 1 < dec_layers_.size() ? affine_sigmoid(dec_layers_[l], a)
                                     : affine(dec_layers_[l], a);
    return a;
  }

  ForwardBackward forward_backward(const Matrix& inputs, const Matrix& targets, double w_rec,
                                   double w_pred) const override;

  nlohmann::json to_json() const override {
    return {{"format", "kausal-feature-map"}, {"version", 1}, {"kind", "mlp"},
            {"input_dim", dim_}, {"output_dim", code_dim_}, {"hidden", hidden_},
            {"seed", seed_}, {"params", params_}, {"mean", mean_}, {"inv_std", inv_std_}};
  }
  std::unique_ptr<FeatureMap> clone() const override { return std::make_unique<MlpMap>(*this); }

  void load_state(std::vector<double> params, std::vector<double> mean,
                  std::vector<double> inv_std) {
    if (params.size() != params_.size() || mean.size() != dim_ || inv_std.size() != dim_)
      throw std::invalid_argument("mlp: serialized state has wrong shape");
    params_ = std::move(params);
    mean_ = std::move(mean);
    inv_std_ = std::move(inv_std);
  }

 private:
  void glorot_init(std::uint64_t seed) {
    SeededRng rng(seed);
    auto init = [&](const std::vector<AffineShape>& layers) {
      for (const AffineShape& l : layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        for (std::size_t i = 0; i < l.in * l.out; ++i)
          params_[l.offset + i] = (2.0 * rng.uniform() - 1.0) * limit;
      }
    };
    init(enc_layers_);
    init(dec_layers_);
  }

  std::vector<double> affine(const AffineShape& l, std::span<const double> a) const {
    std::vector<double> z(l.out);
    const double* w = params_.data() + l.offset;
    const double* b = w + l.in * l.out;
    for (std::size_t i = 0; i < l.out; ++i) {
      double s = b[i];
      const double* wi = w + i * l.in;
      for (std::size_t j = 0; j < l.in; ++j) s += wi[j] * a[j];
      z[i] = s;
    }
    return z;
  }
  std::vector<double> affine_sigmoid(const AffineShape& l, std::span<const double> a) const {
    std::vector<double> z = affine(l, a);
    for (double& v : z) v = sigmoid(v);
    return z;
  }

  std::size_t dim_;
  std::vector<std::size_t> hidden_;
  std::size_t code_dim_;
  std::uint64_t seed_;
  std::vector<AffineShape> enc_layers_;
  std::vector<AffineShape> dec_layers_;
  std::vector<double> params_;
  std::vector<double> mean_;
  std::vector<double> inv_std_;
};

ForwardBackward MlpMap::forward_backward(const Matrix& inputs, const Matrix& targets,
                                         double w_rec, double w_pred) const {
  if (inputs.rows() == 0 || inputs.cols() != dim_)
    throw std::invalid_argument("mlp: bad input batch shape");
  if (targets.rows() != inputs.rows() || targets.cols() != dim_)
    throw std::invalid_argument("mlp: bad target batch shape");

  const std::size_t batch = inputs.rows();
  const std::size_t total_layers = enc_layers_.size() + dec_layers_.size();
  auto layer_at = [&](std::size_t l) -> const AffineShape& {
    return l < enc_layers_.size() ? enc_layers_[l] : dec_layers_[l - enc_layers_.size()];
  };

  // acts[0] is the standardized input, acts[l+1] the output of layer l.
  std::vector<Matrix> acts(total_layers + 1);
  acts[0] = inputs;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < dim_; ++j)
      acts[0](i, j) = (acts[0](i, j) - mean_[j]) * inv_std_[j];

  for (std::size_t l = 0; l < total_layers; ++l) {
    const AffineShape& shape = layer_at(l);
    const double* w = params_.data() + shape.offset;
    const double* b = w + shape.in * shape.out;
    Matrix z(batch, shape.out);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* ai = acts[l].data() + i * shape.in;
      double* zi = z.data() + i * shape.out;
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double* wo = w + o * shape.in;
        double s = b[o];
        for (std::size_t j = 0; j < shape.in; ++j) s += wo[j] * ai[j];
        zi[o] = s;
      }
    }
    if (l + 1 < total_layers)
      for (std::size_t k = 0; k < z.size(); ++k) z.data()[k] = sigmoid(z.data()[k]);
    acts[l + 1] = std::move(z);
  }

  ForwardBackward result;
  result.gradients.assign(params_.size(), 0.0);
  const Matrix& out = acts[total_layers];
  const double norm = 1.0 / static_cast<double>(batch * dim_);

  Matrix delta(batch, dim_);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < dim_; ++j) {
      const double r_rec = out(i, j) - inputs(i, j);
      const double r_pred = out(i, j) - targets(i, j);
      result.loss += norm * (w_rec * r_rec * r_rec + w_pred * r_pred * r_pred);
      delta(i, j) = 2.0 * norm * (w_rec * r_rec + w_pred * r_pred);
    }
  }

  for (std::size_t l = total_layers; l-- > 0;) {
    const AffineShape& shape = layer_at(l);
    if (l + 1 < total_layers) {
      // Fold the sigmoid derivative into delta.
      const Matrix& a = acts[l + 1];
      for (std::size_t k = 0; k < delta.size(); ++k)
        delta.data()[k] *= a.data()[k] * (1.0 - a.data()[k]);
    }
    double* gw = result.gradients.data() + shape.offset;
    double* gb = gw + shape.in * shape.out;
    for (std::size_t i = 0; i < batch; ++i) {
      const double* ai = acts[l].data() + i * shape.in;
      const double* di = delta.data() + i * shape.out;
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        double* gwo = gw + o * shape.in;
        for (std::size_t j = 0; j < shape.in; ++j) gwo[j] += d * ai[j];
        gb[o] += d;
      }
    }
    if (l == 0) break;
    const double* w = params_.data() + shape.offset;
    Matrix prev(batch, shape.in, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* di = delta.data() + i * shape.out;
      double* pi = prev.data() + i * shape.in;
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        const double* wo = w + o * shape.in;
        for (std::size_t j = 0; j < shape.in; ++j) pi[j] += d * wo[j];
      }
    }
    delta = std::move(prev);
  }
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// CNN encoder-decoder
// ---------------------------------------------------------------------------

namespace {

struct ConvShape {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t offset = 0;  // W (out*in*9) then b (out)
  std::size_t size() const { return out_ch * in_ch * 9 + out_ch; }
};

class CnnMap final : public TrainableMap {
 public:
  CnnMap(std::size_t in_channels, std::size_t nx, std::size_t ny,
         std::vector<std::size_t> channels, std::size_t code_dim, std::uint64_t seed)
      : in_ch_(in_channels), nx_(nx), ny_(ny), channels_(std::move(channels)),
        code_dim_(code_dim), seed_(seed) {
    if (channels_.empty()) throw std::invalid_argument("cnn: needs at least one channel");
    const std::size_t factor = std::size_t{1} << channels_.size();
    if (nx_ % factor != 0 || ny_ % factor != 0)
      throw std::invalid_argument("cnn: grid " + std::to_string(nx_) + "x" + std::to_string(ny_) +
                                  " not divisible by downsampling factor " +
                                  std::to_string(factor));

    std::size_t offset = 0;
    std::size_t ch = in_ch_;
    for (std::size_t c : channels_) {
      enc_convs_.push_back({ch, c, offset});
      offset += enc_convs_.back().size();
      ch = c;
    }
    flat_ = channels_.back() * (nx_ >> channels_.size()) * (ny_ >> channels_.size());
    enc_linear_ = {flat_, code_dim_, offset};
    offset += enc_linear_.size();
    dec_linear_ = {code_dim_, flat_, offset};
    offset += dec_linear_.size();
    for (std::size_t l = channels_.size(); l-- > 0;) {
      const std::size_t cin = channels_[l];
      const std::size_t cout = l == 0 ? in_ch_ : channels_[l - 1];
      dec_convs_.push_back({cin, cout, offset});
      offset += dec_convs_.back().size();
    }
    params_.assign(offset, 0.0);
    mean_.assign(in_ch_, 0.0);
    inv_std_.assign(in_ch_, 1.0);
    glorot_init(seed);
  }

  FeatureKind kind() const override { return FeatureKind::cnn; }
  std::size_t input_dim() const override { return in_ch_ * nx_ * ny_; }
  std::size_t output_dim() const override { return code_dim_; }

  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }

  void set_standardization(const Matrix& samples) override {
    if (samples.cols() != input_dim())
      throw std::invalid_argument("cnn: standardization sample dimension mismatch");
    const std::size_t plane = nx_ * ny_;
    for (std::size_t c = 0; c < in_ch_; ++c) {
      double m = 0.0;
      for (std::size_t i = 0; i < samples.rows(); ++i)
        for (std::size_t k = 0; k < plane; ++k) m += samples(i, c * plane + k);
      m /= static_cast<double>(samples.rows() * plane);
      double var = 0.0;
      for (std::size_t i = 0; i < samples.rows(); ++i)
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = samples(i, c * plane + k) - m;
          var += d * d;
        }
      var /= static_cast<double>(samples.rows() * plane);
      mean_[c] = m;
      inv_std_[c] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }

  std::vector<double> apply(std::span<const double> x) const override {
    check_input(*this, x, input_dim());
    std::vector<std::vector<double>> acts;
    std::vector<double> code = encode(x, &acts);
    for (double& v : code) v = std::clamp(v, kCodeFloor, kCodeCeil);
    return code;
  }

  std::vector<double> decode(std::span<const double> code) const override;

  ForwardBackward forward_backward(const Matrix& inputs, const Matrix& targets, double w_rec,
                                   double w_pred) const override;

  nlohmann::json to_json() const override {
    return {{"format", "kausal-feature-map"}, {"version", 1}, {"kind", "cnn"},
            {"input_dim", input_dim()}, {"output_dim", code_dim_}, {"in_channels", in_ch_},
            {"grid", {nx_, ny_}}, {"channels", channels_}, {"seed", seed_},
            {"params", params_}, {"mean", mean_}, {"inv_std", inv_std_}};
  }
  std::unique_ptr<FeatureMap> clone() const override { return std::make_unique<CnnMap>(*this); }

  void load_state(std::vector<double> params, std::vector<double> mean,
                  std::vector<double> inv_std) {
    if (params.size() != params_.size() || mean.size() != in_ch_ || inv_std.size() != in_ch_)
      throw std::invalid_argument("cnn: serialized state has wrong shape");
    params_ = std::move(params);
    mean_ = std::move(mean);
    inv_std_ = std::move(inv_std);
  }

 private:
  void glorot_init(std::uint64_t seed) {
    SeededRng rng(seed);
    auto init_conv = [&](const ConvShape& l) {
      const double limit = std::sqrt(6.0 / static_cast<double>((l.in_ch + l.out_ch) * 9));
      for (std::size_t i = 0; i < l.in_ch * l.out_ch * 9; ++i)
        params_[l.offset + i] = (2.0 * rng.uniform() - 1.0) * limit;
    };
    for (const ConvShape& l : enc_convs_) init_conv(l);
    for (const AffineShape& l : {enc_linear_, dec_linear_}) {
      const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      for (std::size_t i = 0; i < l.in * l.out; ++i)
        params_[l.offset + i] = (2.0 * rng.uniform() - 1.0) * limit;
    }
    for (const ConvShape& l : dec_convs_) init_conv(l);
  }

  // Forward encoder; if acts is non-null every intermediate activation is
  // stored (standardized input first).
  std::vector<double> encode(std::span<const double> x,
                             std::vector<std::vector<double>>* acts) const;

  std::size_t in_ch_;
  std::size_t nx_;
  std::size_t ny_;
  std::vector<std::size_t> channels_;
  std::size_t code_dim_;
  std::uint64_t seed_;
  std::vector<ConvShape> enc_convs_;
  AffineShape enc_linear_;
  AffineShape dec_linear_;
  std::vector<ConvShape> dec_convs_;
  std::size_t flat_ = 0;
  std::vector<double> params_;
  std::vector<double> mean_;     // per channel
  std::vector<double> inv_std_;  // per channel

  friend struct CnnWork;
};

// Strided 3x3 convolution helpers on channel-major planes.
void conv3x3(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weights,
             const double* bias, std::size_t cout, std::size_t stride, double* out) {
  const std::size_t oh = h / stride, ow = w / stride;
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out + co * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) o[i] = bias[co];
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* f = in + ci * h * w;
      const double* k = weights + (co * cin + ci) * 9;
      for (std::size_t oi = 0; oi < oh; ++oi) {
        for (std::size_t oj = 0; oj < ow; ++oj) {
          double s = 0.0;
          const std::size_t bi = oi * stride, bj = oj * stride;
          for (std::size_t di = 0; di < 3; ++di) {
            const std::size_t ii = bi + di;
            if (ii == 0 || ii > h) continue;  // zero padding of 1
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const std::size_t jj = bj + dj;
              if (jj == 0 || jj > w) continue;
              s += k[di * 3 + dj] * f[(ii - 1) * w + (jj - 1)];
            }
          }
          o[oi * ow + oj] += s;
        }
      }
    }
  }
}

void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w,
                      const double* weights, std::size_t cout, std::size_t stride,
                      const double* dout, double* din, double* dweights, double* dbias) {
  const std::size_t oh = h / stride, ow = w / stride;
  for (std::size_t co = 0; co < cout; ++co) {
    const double* dO = dout + co * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) dbias[co] += dO[i];
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* f = in + ci * h * w;
      double* dI = din ? din + ci * h * w : nullptr;
      const double* k = weights + (co * cin + ci) * 9;
      double* dK = dweights + (co * cin + ci) * 9;
      for (std::size_t oi = 0; oi < oh; ++oi) {
        for (std::size_t oj = 0; oj < ow; ++oj) {
          const double d = dO[oi * ow + oj];
          if (d == 0.0) continue;
          const std::size_t bi = oi * stride, bj = oj * stride;
          for (std::size_t di = 0; di < 3; ++di) {
            const std::size_t ii = bi + di;
            if (ii == 0 || ii > h) continue;
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const std::size_t jj = bj + dj;
              if (jj == 0 || jj > w) continue;
              dK[di * 3 + dj] += d * f[(ii - 1) * w + (jj - 1)];
              if (dI) dI[(ii - 1) * w + (jj - 1)] += d * k[di * 3 + dj];
            }
          }
        }
      }
    }
  }
}

void upsample2x(const double* in, std::size_t ch, std::size_t h, std::size_t w, double* out) {
  for (std::size_t c = 0; c < ch; ++c) {
    const double* f = in + c * h * w;
    double* o = out + c * 4 * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = f[i * w + j];
        double* base = o + (2 * i) * (2 * w) + 2 * j;
        base[0] = v;
        base[1] = v;
        base[2 * w] = v;
        base[2 * w + 1] = v;
      }
  }
}

void upsample2x_backward(const double* dout, std::size_t ch, std::size_t h, std::size_t w,
                         double* din) {
  for (std::size_t c = 0; c < ch; ++c) {
    const double* dO = dout + c * 4 * h * w;
    double* dI = din + c * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double* base = dO + (2 * i) * (2 * w) + 2 * j;
        dI[i * w + j] += base[0] + base[1] + base[2 * w] + base[2 * w + 1];
      }
  }
}

std::vector<double> CnnMap::encode(std::span<const double> x,
                                   std::vector<std::vector<double>>* acts) const {
  const std::size_t plane = nx_ * ny_;
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t c = 0; c < in_ch_; ++c)
    for (std::size_t k = 0; k < plane; ++k)
      cur[c * plane + k] = (cur[c * plane + k] - mean_[c]) * inv_std_[c];
  if (acts) acts->push_back(cur);

  std::size_t h = nx_, w = ny_;
  for (const ConvShape& conv : enc_convs_) {
    std::vector<double> next(conv.out_ch * (h / 2) * (w / 2));
    const double* wgt = params_.data() + conv.offset;
    conv3x3(cur.data(), conv.in_ch, h, w, wgt, wgt + conv.in_ch * conv.out_ch * 9, conv.out_ch, 2,
            next.data());
    for (double& v : next) v = sigmoid(v);
    h /= 2;
    w /= 2;
    cur = std::move(next);
    if (acts) acts->push_back(cur);
  }

  // flatten happens implicitly: cur already is channels*h*w contiguous
  std::vector<double> code(code_dim_);
  const double* wl = params_.data() + enc_linear_.offset;
  const double* bl = wl + enc_linear_.in * enc_linear_.out;
  for (std::size_t o = 0; o < code_dim_; ++o) {
    double s = bl[o];
    const double* wo = wl + o * enc_linear_.in;
    for (std::size_t j = 0; j < flat_; ++j) s += wo[j] * cur[j];
    code[o] = sigmoid(s);
  }
  if (acts) acts->push_back(code);
  return code;
}

std::vector<double> CnnMap::decode(std::span<const double> code) const {
  if (code.size() != code_dim_) throw std::invalid_argument("cnn: code dimension mismatch");
  std::vector<double> cur(flat_);
  const double* wl = params_.data() + dec_linear_.offset;
  const double* bl = wl + dec_linear_.in * dec_linear_.out;
  for (std::size_t o = 0; o < flat_; ++o) {
    double s = bl[o];
    const double* wo = wl + o * code_dim_;
    for (std::size_t j = 0; j < code_dim_; ++j) s += wo[j] * code[j];
    cur[o] = sigmoid(s);
  }
  std::size_t h = nx_ >> channels_.size(), w = ny_ >> channels_.size();
  for (std::size_t l = 0; l < dec_convs_.size(); ++l) {
    const ConvShape& conv = dec_convs_[l];
    std::vector<double> up(conv.in_ch * 4 * h * w);
    upsample2x(cur.data(), conv.in_ch, h, w, up.data());
    h *= 2;
    w *= 2;
    std::vector<double> next(conv.out_ch * h * w);
    const double* wgt = params_.data() + conv.offset;
    conv3x3(up.data(), conv.in_ch, h, w, wgt, wgt + conv.in_ch * conv.out_ch * 9, conv.out_ch, 1,
            next.data());
    if (l + 1 < dec_convs_.size())
      for (double& v : next) v = sigmoid(v);
    cur = std::move(next);
  }
  return cur;
}

ForwardBackward CnnMap::forward_backward(const Matrix& inputs, const Matrix& targets,
                                         double w_rec, double w_pred) const {
  if (inputs.rows() == 0 || inputs.cols() != input_dim())
    throw std::invalid_argument("cnn: bad input batch shape");
  if (targets.rows() != inputs.rows() || targets.cols() != input_dim())
    throw std::invalid_argument("cnn: bad target batch shape");

  ForwardBackward result;
  result.gradients.assign(params_.size(), 0.0);
  const std::size_t batch = inputs.rows();
  const double norm = 1.0 / static_cast<double>(batch * input_dim());
  const std::size_t levels = channels_.size();

  for (std::size_t s = 0; s < batch; ++s) {
    // --- forward, keeping every activation ---
    std::vector<std::vector<double>> enc_acts;  // [0]=standardized input, then conv outputs, code
    std::vector<double> code = encode(inputs.row(s), &enc_acts);

    std::vector<std::vector<double>> dec_acts;  // dec linear output, then conv outputs
    std::vector<std::vector<double>> dec_ups;   // upsampled inputs per decoder conv
    std::vector<double> cur(flat_);
    {
      const double* wl = params_.data() + dec_linear_.offset;
      const double* bl = wl + dec_linear_.in * dec_linear_.out;
      for (std::size_t o = 0; o < flat_; ++o) {
        double v = bl[o];
        const double* wo = wl + o * code_dim_;
        for (std::size_t j = 0; j < code_dim_; ++j) v += wo[j] * code[j];
        cur[o] = sigmoid(v);
      }
    }
    dec_acts.push_back(cur);
    std::size_t h = nx_ >> levels, w = ny_ >> levels;
    for (std::size_t l = 0; l < dec_convs_.size(); ++l) {
      const ConvShape& conv = dec_convs_[l];
      std::vector<double> up(conv.in_ch * 4 * h * w);
      upsample2x(cur.data(), conv.in_ch, h, w, up.data());
      dec_ups.push_back(up);
      h *= 2;
      w *= 2;
      std::vector<double> next(conv.out_ch * h * w);
      const double* wgt = params_.data() + conv.offset;
      conv3x3(up.data(), conv.in_ch, h, w, wgt, wgt + conv.in_ch * conv.out_ch * 9, conv.out_ch,
              1, next.data());
      if (l + 1 < dec_convs_.size())
        for (double& v : next) v = sigmoid(v);
      cur = std::move(next);
      dec_acts.push_back(cur);
    }

    // --- loss and output delta ---
    const std::vector<double>& out = dec_acts.back();
    std::vector<double> delta(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double r_rec = out[k] - inputs(s, k);
      const double r_pred = out[k] - targets(s, k);
      result.loss += norm * (w_rec * r_rec * r_rec + w_pred * r_pred * r_pred);
      delta[k] = 2.0 * norm * (w_rec * r_rec + w_pred * r_pred);
    }

    // --- backward through decoder convs ---
    for (std::size_t l = dec_convs_.size(); l-- > 0;) {
      const ConvShape& conv = dec_convs_[l];
      if (l + 1 < dec_convs_.size()) {
        const std::vector<double>& a = dec_acts[l + 1];
        for (std::size_t k = 0; k < delta.size(); ++k) delta[k] *= a[k] * (1.0 - a[k]);
      }
      const std::size_t oh = nx_ >> (levels - 1 - l);  // output size of this conv
      const std::size_t ow = ny_ >> (levels - 1 - l);
      std::vector<double> dup(dec_ups[l].size(), 0.0);
      double* gw = result.gradients.data() + conv.offset;
      conv3x3_backward(dec_ups[l].data(), conv.in_ch, oh, ow, params_.data() + conv.offset,
                       conv.out_ch, 1, delta.data(), dup.data(), gw,
                       gw + conv.in_ch * conv.out_ch * 9);
      std::vector<double> dprev(conv.in_ch * (oh / 2) * (ow / 2), 0.0);
      upsample2x_backward(dup.data(), conv.in_ch, oh / 2, ow / 2, dprev.data());
      delta = std::move(dprev);
    }

    // --- backward through decoder linear (sigmoid on its output) ---
    {
      const std::vector<double>& a = dec_acts[0];
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] *= a[k] * (1.0 - a[k]);
      double* gw = result.gradients.data() + dec_linear_.offset;
      double* gb = gw + dec_linear_.in * dec_linear_.out;
      const double* wl = params_.data() + dec_linear_.offset;
      std::vector<double> dcode(code_dim_, 0.0);
      for (std::size_t o = 0; o < flat_; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* gwo = gw + o * code_dim_;
        const double* wo = wl + o * code_dim_;
        for (std::size_t j = 0; j < code_dim_; ++j) {
          gwo[j] += d * code[j];
          dcode[j] += d * wo[j];
        }
        gb[o] += d;
      }
      delta = std::move(dcode);
    }

    // --- backward through encoder linear (sigmoid output = code) ---
    {
      for (std::size_t k = 0; k < code_dim_; ++k) delta[k] *= code[k] * (1.0 - code[k]);
      const std::vector<double>& flat_in = enc_acts[levels];  // last conv activation
      double* gw = result.gradients.data() + enc_linear_.offset;
      double* gb = gw + enc_linear_.in * enc_linear_.out;
      const double* wl = params_.data() + enc_linear_.offset;
      std::vector<double> dflat(flat_, 0.0);
      for (std::size_t o = 0; o < code_dim_; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* gwo = gw + o * flat_;
        const double* wo = wl + o * flat_;
        for (std::size_t j = 0; j < flat_; ++j) {
          gwo[j] += d * flat_in[j];
          dflat[j] += d * wo[j];
        }
        gb[o] += d;
      }
      delta = std::move(dflat);
    }

    // --- backward through encoder convs ---
    for (std::size_t l = enc_convs_.size(); l-- > 0;) {
      const ConvShape& conv = enc_convs_[l];
      const std::vector<double>& a = enc_acts[l + 1];
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] *= a[k] * (1.0 - a[k]);
      const std::size_t ih = nx_ >> l, iw = ny_ >> l;
      std::vector<double> dprev;
      double* dprev_ptr = nullptr;
      if (l > 0) {
        dprev.assign(conv.in_ch * ih * iw, 0.0);
        dprev_ptr = dprev.data();
      }
      double* gw = result.gradients.data() + conv.offset;
      conv3x3_backward(enc_acts[l].data(), conv.in_ch, ih, iw, params_.data() + conv.offset,
                       conv.out_ch, 2, delta.data(), dprev_ptr, gw,
                       gw + conv.in_ch * conv.out_ch * 9);
      if (l > 0) delta = std::move(dprev);
    }
  }
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::vector<double> train_dictionary(TrainableMap& map, const Matrix& training_states,
                                     const TrainConfig& config) {
  if (training_states.rows() == 0)
    throw std::invalid_argument("train_dictionary: empty training set");
  if (config.epochs < 1) throw std::invalid_argument("train_dictionary: epochs must be >= 1");
  if (!(config.learning_rate >= 0.0))
    throw std::invalid_argument("train_dictionary: bad learning rate");

  // Pair each sample with its successor; the last row only serves as a
  // prediction target.
  const std::size_t pairs = training_states.rows() > 1 ? training_states.rows() - 1 : 1;
  Matrix inputs(pairs, training_states.cols());
  Matrix targets(pairs, training_states.cols());
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t target_row = training_states.rows() > 1 ? i + 1 : i;
    std::copy(training_states.row(i).begin(), training_states.row(i).end(),
              inputs.row(i).begin());
    std::copy(training_states.row(target_row).begin(), training_states.row(target_row).end(),
              targets.row(i).begin());
  }

  const std::size_t batch_size =
      config.batch_size == 0 ? pairs : std::min(config.batch_size, pairs);
  AdamWState state(map.params().size());
  SeededRng rng(config.seed);
  std::vector<double> history;
  history.reserve(config.epochs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(pairs);
    for (std::size_t i = 0; i < pairs; ++i) order[i] = i;
    if (batch_size < pairs) order = rng.permutation(pairs);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs; start += batch_size) {
      const std::size_t count = std::min(batch_size, pairs - start);
      Matrix bin(count, inputs.cols()), btg(count, inputs.cols());
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        std::copy(inputs.row(src).begin(), inputs.row(src).end(), bin.row(i).begin());
        std::copy(targets.row(src).begin(), targets.row(src).end(), btg.row(i).begin());
      }
      ForwardBackward fb =
          map.forward_backward(bin, btg, config.w_reconstruction, config.w_prediction);
      if (!std::isfinite(fb.loss))
        throw std::runtime_error("train_dictionary: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batches));
      if (config.learning_rate > 0.0)
        adamw_step(map.params(), fb.gradients, state, config.learning_rate, config.weight_decay);
      epoch_loss += fb.loss;
      ++batches;
    }
    history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return history;
}

// ---------------------------------------------------------------------------
// Factory and serialization
// ---------------------------------------------------------------------------

namespace {

double median_pairwise_distance(const Matrix& samples) {
  const std::size_t n = std::min<std::size_t>(samples.rows(), 256);
  if (n < 2) return 1.0;
  const std::size_t stride = samples.rows() / n;
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = samples.row(i * stride);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto rj = samples.row(j * stride);
      double d = 0.0;
      for (std::size_t k = 0; k < ri.size(); ++k) {
        const double diff = ri[k] - rj[k];
        d += diff * diff;
      }
      dists.push_back(std::sqrt(d));
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

}  // namespace

std::unique_ptr<FeatureMap> make_feature_map(const DictionarySpec& spec, std::size_t input_dim,
                                             std::uint64_t seed, const Matrix* sample_inputs) {
  switch (spec.kind) {
    case FeatureKind::identity:
      return std::make_unique<IdentityMap>(input_dim);
    case FeatureKind::polynomial:
      return std::make_unique<PolynomialMap>(input_dim, spec.degree);
    case FeatureKind::time_delay:
      return std::make_unique<TimeDelayMap>(input_dim, spec.delays, spec.lag);
    case FeatureKind::rff: {
      double ell = spec.lengthscale;
      if (ell <= 0.0) {
        if (sample_inputs == nullptr)
          throw std::invalid_argument("rff: median-heuristic lengthscale needs sample inputs");
        ell = median_pairwise_distance(*sample_inputs);
      }
      return std::make_unique<RffMap>(input_dim, spec.output_dim, ell, seed);
    }
    case FeatureKind::mlp: {
      auto map = std::make_unique<MlpMap>(input_dim, spec.hidden, spec.output_dim, seed);
      if (spec.standardize && sample_inputs != nullptr) map->set_standardization(*sample_inputs);
      return map;
    }
    case FeatureKind::cnn: {
      const std::size_t plane = spec.grid_nx * spec.grid_ny;
      if (plane == 0 || input_dim % plane != 0)
        throw std::invalid_argument("cnn: input dimension not a multiple of the grid size");
      auto map = std::make_unique<CnnMap>(input_dim / plane, spec.grid_nx, spec.grid_ny,
                                          spec.channels, spec.output_dim, seed);
      if (spec.standardize && sample_inputs != nullptr) map->set_standardization(*sample_inputs);
      return map;
    }
  }
  throw std::logic_error("make_feature_map: unknown kind");
}

std::unique_ptr<FeatureMap> feature_map_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "kausal-feature-map")
    throw std::invalid_argument("feature_map_from_json: not a feature map document");
  const FeatureKind kind = feature_kind_from_string(doc.at("kind").get<std::string>());
  switch (kind) {
    case FeatureKind::identity:
      return std::make_unique<IdentityMap>(doc.at("input_dim").get<std::size_t>());
    case FeatureKind::polynomial:
      return std::make_unique<PolynomialMap>(doc.at("input_dim").get<std::size_t>(),
                                             doc.at("degree").get<std::size_t>());
    case FeatureKind::time_delay:
      return std::make_unique<TimeDelayMap>(doc.at("input_dim").get<std::size_t>(),
                                            doc.at("delays").get<std::size_t>(),
                                            doc.at("lag").get<std::size_t>());
    case FeatureKind::rff: {
      const std::size_t dim = doc.at("input_dim").get<std::size_t>();
      const std::size_t m = doc.at("output_dim").get<std::size_t>();
      auto freqs = doc.at("frequencies").get<std::vector<double>>();
      auto phases = doc.at("phases").get<std::vector<double>>();
      if (freqs.size() != m * dim || phases.size() != m)
        throw std::invalid_argument("rff: serialized arrays have wrong shape");
      Matrix w(m, dim);
      std::copy(freqs.begin(), freqs.end(), w.data());
      return std::make_unique<RffMap>(dim, m, doc.at("lengthscale").get<double>(),
                                      doc.value("seed", std::uint64_t{0}), std::move(w),
                                      std::move(phases));
    }
    case FeatureKind::mlp: {
      auto map = std::make_unique<MlpMap>(doc.at("input_dim").get<std::size_t>(),
                                          doc.at("hidden").get<std::vector<std::size_t>>(),
                                          doc.at("output_dim").get<std::size_t>(),
                                          doc.value("seed", std::uint64_t{0}));
      map->load_state(doc.at("params").get<std::vector<double>>(),
                      doc.at("mean").get<std::vector<double>>(),
                      doc.at("inv_std").get<std::vector<double>>());
      return map;
    }
    case FeatureKind::cnn: {
      const auto grid = doc.at("grid").get<std::vector<std::size_t>>();
      auto map = std::make_unique<CnnMap>(doc.at("in_channels").get<std::size_t>(), grid.at(0),
                                          grid.at(1),
                                          doc.at("channels").get<std::vector<std::size_t>>(),
                                          doc.at("output_dim").get<std::size_t>(),
                                          doc.value("seed", std::uint64_t{0}));
      map->load_state(doc.at("params").get<std::vector<double>>(),
                      doc.at("mean").get<std::vector<double>>(),
                      doc.at("inv_std").get<std::vector<double>>());
      return map;
    }
  }
  throw std::logic_error("feature_map_from_json: unknown kind");
}

}  // namespace kausal
