#include "hmmcnn/nn/cnn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hmmcnn/error.hpp"
#include "hmmcnn/nn/kernels.hpp"
#include "hmmcnn/random.hpp"

namespace hmmcnn::nn {

std::vector<ConvBlockSpec> CnnSpec::default_base() {
  return {{8, 3, 1, 2}, {16, 3, 1, 2}, {32, 3, 1, 2}};
}

std::vector<std::pair<std::size_t, std::size_t>> CnnSpec::block_sides() const {
  std::vector<std::pair<std::size_t, std::size_t>> sides;
  std::size_t side = input_side;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    const auto& blk = conv_blocks[i];
    if (blk.filters == 0 || blk.kernel == 0 || blk.stride == 0 || blk.pool == 0) {
      throw Error(ErrorKind::ShapeMismatch, "conv block " + std::to_string(i) + " has a zero field");
    }
    if (side < blk.kernel) {
      throw Error(ErrorKind::ShapeMismatch, "conv block " + std::to_string(i) + " kernel exceeds input");
    }
    const std::size_t conv_side = (side - blk.kernel) / blk.stride + 1;
    const std::size_t pooled = conv_side / blk.pool;
    if (pooled < 1) throw Error(ErrorKind::ShapeMismatch, "conv block " + std::to_string(i) + " pools below 1x1");
    sides.emplace_back(conv_side, pooled);
    side = pooled;
  }
  return sides;
}

void CnnSpec::validate() const {
  if (input_side == 0 || num_classes == 0 || hidden_width == 0) {
    throw Error(ErrorKind::ShapeMismatch, "input_side, hidden_width and num_classes must be positive");
  }
  block_sides();
}

std::size_t CnnSpec::gap_width() const { return conv_blocks.empty() ? 1 : conv_blocks.back().filters; }

std::vector<std::vector<std::size_t>> CnnSpec::weight_shapes() const {
  std::vector<std::vector<std::size_t>> shapes;
  std::size_t channels = 1;
  for (const auto& blk : conv_blocks) {
    shapes.push_back({blk.filters, channels, blk.kernel, blk.kernel});
    shapes.push_back({blk.filters});
    channels = blk.filters;
  }
  shapes.push_back({hidden_width, gap_width()});
  shapes.push_back({hidden_width});
  shapes.push_back({num_classes, hidden_width});
  shapes.push_back({num_classes});
  return shapes;
}

std::vector<std::string> CnnSpec::weight_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    names.push_back("conv" + std::to_string(i) + ".w");
    names.push_back("conv" + std::to_string(i) + ".b");
  }
  for (const char* n : {"dense1.w", "dense1.b", "dense2.w", "dense2.b"}) names.emplace_back(n);
  return names;
}

nlohmann::json to_json(const std::vector<ConvBlockSpec>& base) {
  auto arr = nlohmann::json::array();
  for (const auto& b : base) {
    arr.push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"stride", b.stride}, {"pool", b.pool}});
  }
  return arr;
}

std::vector<ConvBlockSpec> conv_base_from_json(const nlohmann::json& j) {
  std::vector<ConvBlockSpec> base;
  for (const auto& b : j) {
    ConvBlockSpec blk;
    blk.filters = b.at("filters").get<std::size_t>();
    blk.kernel = b.value("kernel", std::size_t{3});
    blk.stride = b.value("stride", std::size_t{1});
    blk.pool = b.value("pool", std::size_t{2});
    base.push_back(blk);
  }
  return base;
}

nlohmann::json to_json(const CnnSpec& spec) {
  return {{"input_side", spec.input_side},
          {"conv_blocks", to_json(spec.conv_blocks)},
          {"hidden_width", spec.hidden_width},
          {"num_classes", spec.num_classes}};
}

CnnSpec cnn_spec_from_json(const nlohmann::json& j) {
  CnnSpec spec;
  spec.input_side = j.at("input_side").get<std::size_t>();
  spec.conv_blocks = conv_base_from_json(j.at("conv_blocks"));
  spec.hidden_width = j.value("hidden_width", std::size_t{1024});
  spec.num_classes = j.at("num_classes").get<std::size_t>();
  spec.validate();
  return spec;
}

template <typename Real>
BasicCnn<Real> init_cnn(const CnnSpec& spec, std::uint64_t seed) {
  spec.validate();
  BasicCnn<Real> model;
  model.spec = spec;
  model.seed = seed;
  Rng rng(seed);
  for (const auto& shape : spec.weight_shapes()) {
    Tensor<Real> t(shape);
    if (shape.size() > 1) {
      const std::size_t fan_in = t.size() / shape[0];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
    }
    model.weights.push_back(std::move(t));
  }
  return model;
}

template <typename Real>
ForwardCache<Real> forward(const BasicCnn<Real>& model, const Tensor<Real>& batch) {
  const auto& spec = model.spec;
  if (batch.shape().size() != 4 || batch.dim(1) != 1 || batch.dim(2) != spec.input_side ||
      batch.dim(3) != spec.input_side) {
    throw Error(ErrorKind::ShapeMismatch, "batch must be [B, 1, " + std::to_string(spec.input_side) + ", " +
                                              std::to_string(spec.input_side) + "]");
  }
  if (model.weights.size() != spec.weight_shapes().size()) {
    throw Error(ErrorKind::ShapeMismatch, "weight count does not match spec");
  }
  ForwardCache<Real> cache;
  cache.model_version = model.version;
  cache.batch = batch.dim(0);
  cache.input = batch;
  const std::size_t B = cache.batch;

  const auto sides = spec.block_sides();
  const Tensor<Real>* in = &cache.input;
  std::size_t channels = 1;
  std::size_t side = spec.input_side;
  for (std::size_t i = 0; i < spec.conv_blocks.size(); ++i) {
    const auto& blk = spec.conv_blocks[i];
    const auto [conv_side, pooled] = sides[i];
    kernels::ConvGeometry g{B, channels, side, side, blk.filters, blk.kernel, blk.stride};
    Tensor<Real> conv({B, blk.filters, conv_side, conv_side});
    kernels::conv2d_forward(g, in->data(), model.weights[2 * i].data(), model.weights[2 * i + 1].data(),
                            conv.data(), true);
    Tensor<Real> pool({B, blk.filters, pooled, pooled});
    std::vector<std::uint32_t> arg(pool.size());
    kernels::maxpool_forward(B * blk.filters, conv_side, conv_side, blk.pool, conv.data(), pool.data(),
                             arg.data());
    cache.conv_out.push_back(std::move(conv));
    cache.pool_out.push_back(std::move(pool));
    cache.argmax.push_back(std::move(arg));
    in = &cache.pool_out.back();
    channels = blk.filters;
    side = pooled;
  }

  cache.gap = Tensor<Real>({B, channels});
  const std::size_t plane = side * side;
  for (std::size_t p = 0; p < B * channels; ++p) {
    const Real* src = in->data() + p * plane;
    Real s = 0;
    for (std::size_t k = 0; k < plane; ++k) s += src[k];
    cache.gap[p] = s / static_cast<Real>(plane);
  }

  const std::size_t nb = spec.conv_blocks.size();
  cache.hidden = Tensor<Real>({B, spec.hidden_width});
  kernels::dense_forward(B, channels, spec.hidden_width, cache.gap.data(), model.weights[2 * nb].data(),
                         model.weights[2 * nb + 1].data(), cache.hidden.data(), true);
  Tensor<Real> logits({B, spec.num_classes});
  kernels::dense_forward(B, spec.hidden_width, spec.num_classes, cache.hidden.data(),
                         model.weights[2 * nb + 2].data(), model.weights[2 * nb + 3].data(), logits.data(),
                         false);
  Matrix logits64(B, spec.num_classes);
  std::copy(logits.values().begin(), logits.values().end(), logits64.data().begin());
  cache.probabilities = softmax_rows(logits64);
  return cache;
}

template <typename Real>
std::vector<Tensor<Real>> backward(const BasicCnn<Real>& model, const ForwardCache<Real>& cache,
                                   const Matrix& dprob) {
  if (cache.model_version != model.version) {
    throw Error(ErrorKind::StaleCache, "forward cache predates the latest weight update");
  }
  const auto& spec = model.spec;
  const std::size_t B = cache.batch;
  if (dprob.rows() != B || dprob.cols() != spec.num_classes) {
    throw Error(ErrorKind::ShapeMismatch, "loss gradient shape");
  }
  std::vector<Tensor<Real>> grads;
  for (const auto& w : model.weights) grads.emplace_back(w.shape());

  const Matrix dlogits64 = softmax_backward(cache.probabilities, dprob);
  Tensor<Real> dlogits({B, spec.num_classes});
  std::transform(dlogits64.data().begin(), dlogits64.data().end(), dlogits.values().begin(),
                 [](double v) { return static_cast<Real>(v); });

  const std::size_t nb = spec.conv_blocks.size();
  const std::size_t H = spec.hidden_width;
  const std::size_t C = spec.gap_width();
  Tensor<Real> dhidden({B, H});
  kernels::dense_backward(B, H, spec.num_classes, cache.hidden.data(), model.weights[2 * nb + 2].data(),
                          dlogits.data(), grads[2 * nb + 2].data(), grads[2 * nb + 3].data(), dhidden.data());
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (!(cache.hidden[i] > Real(0))) dhidden[i] = Real(0);
  }
  Tensor<Real> dgap({B, C});
  kernels::dense_backward(B, C, H, cache.gap.data(), model.weights[2 * nb].data(), dhidden.data(),
                          grads[2 * nb].data(), grads[2 * nb + 1].data(), nb > 0 ? dgap.data() : nullptr);
  if (nb == 0) return grads;

  const auto sides = spec.block_sides();
  Tensor<Real> dpool(cache.pool_out.back().shape());
  {
    const std::size_t plane = sides.back().second * sides.back().second;
    for (std::size_t p = 0; p < B * C; ++p) {
      const Real v = dgap[p] / static_cast<Real>(plane);
      std::fill(dpool.data() + p * plane, dpool.data() + (p + 1) * plane, v);
    }
  }
  for (std::size_t i = nb; i-- > 0;) {
    const auto& blk = spec.conv_blocks[i];
    const auto [conv_side, pooled] = sides[i];
    const auto& conv = cache.conv_out[i];
    Tensor<Real> dconv(conv.shape());
    kernels::maxpool_backward(B * blk.filters, conv_side, conv_side, blk.pool, dpool.data(),
                              cache.argmax[i].data(), dconv.data());
    for (std::size_t k = 0; k < dconv.size(); ++k) {
      if (!(conv[k] > Real(0))) dconv[k] = Real(0);
    }
    const Tensor<Real>& in = i == 0 ? cache.input : cache.pool_out[i - 1];
    const std::size_t channels = in.dim(1);
    const std::size_t side = in.dim(2);
    kernels::ConvGeometry g{B, channels, side, side, blk.filters, blk.kernel, blk.stride};
    Tensor<Real> din;
    if (i > 0) din = Tensor<Real>(in.shape());
    kernels::conv2d_backward(g, in.data(), model.weights[2 * i].data(), dconv.data(), grads[2 * i].data(),
                             grads[2 * i + 1].data(), i > 0 ? din.data() : nullptr);
    if (i > 0) dpool = std::move(din);
  }
  return grads;
}

template <typename Real>
void backward_and_step(BasicCnn<Real>& model, const ForwardCache<Real>& cache, const Matrix& dprob,
                       const OptimizerConfig& opt, OptimizerState& state) {
  opt.validate();
  auto grads = backward(model, cache, dprob);
  if (state.slots.size() != model.weights.size()) state.slots.resize(model.weights.size());
  ++state.step;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    apply_update<Real>(opt, state.slots[i], model.weights[i].values(), grads[i].values(), state.step);
  }
  ++model.version;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradientCheckReport gradient_check(CnnModel64 model, const Tensor<double>& batch, const Matrix& targets,
                                   LossKind kind, double h, std::size_t samples_per_layer, std::uint64_t seed) {
  const auto cache = forward(model, batch);
  const auto analytic = backward(model, cache, compute_loss(kind, cache.probabilities, targets).gradient);
  auto loss_at = [&] { return compute_loss(kind, forward(model, batch).probabilities, targets).loss; };

  GradientCheckReport report;
  report.layers = model.spec.weight_names();
  Rng rng(seed);
  for (std::size_t layer = 0; layer < model.weights.size(); ++layer) {
    auto& w = model.weights[layer];
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > samples_per_layer) {
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(samples_per_layer);
    }
    double worst = 0.0;
    for (std::size_t k : idx) {
      const double original = w[k];
      w[k] = original + h;
      const double up = loss_at();
      w[k] = original - h;
      const double down = loss_at();
      w[k] = original;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_error(analytic[layer][k], numeric));
    }
    report.layer_errors.push_back(worst);
    report.checked.push_back(idx.size());
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  return report;
}

namespace {

template <typename Real>
Tensor<Real> gather_batch(const Tensor<Real>& images, std::span<const std::size_t> rows) {
  const std::size_t side = images.dim(2);
  const std::size_t plane = side * side;
  Tensor<Real> batch({rows.size(), 1, side, side});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(images.data() + rows[i] * plane, plane, batch.data() + i * plane);
  }
  return batch;
}

}  // namespace

std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

template <typename Real>
FitHistory fit(BasicCnn<Real>& model, const Tensor<Real>& images, const std::vector<std::size_t>& labels,
               const OptimizerConfig& opt, LossKind kind, std::size_t epochs, std::size_t batch_size,
               std::uint64_t seed, const EpochCallback& on_epoch) {
  if (labels.empty() || images.shape().empty() || images.dim(0) == 0) {
    throw Error(ErrorKind::EmptyInput, "no training images");
  }
  if (images.dim(0) != labels.size()) throw Error(ErrorKind::ShapeMismatch, "images and labels differ in count");
  if (batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be positive");
  opt.validate();

  const std::size_t count = labels.size();
  FitHistory history;
  OptimizerState state;
  std::vector<std::size_t> order(count);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, epoch));
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < count; start += batch_size) {
      const std::size_t stop = std::min(count, start + batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      auto batch = gather_batch(images, rows);
      std::vector<std::size_t> batch_labels;
      for (auto r : rows) batch_labels.push_back(labels[r]);
      auto cache = forward(model, batch);
      const auto targets = one_hot(batch_labels, model.spec.num_classes);
      const auto loss = compute_loss(kind, cache.probabilities, targets);
      loss_sum += loss.loss * static_cast<double>(rows.size());
      const auto pred = argmax_rows(cache.probabilities);
      for (std::size_t i = 0; i < rows.size(); ++i) correct += pred[i] == batch_labels[i] ? 1 : 0;
      backward_and_step(model, cache, loss.gradient, opt, state);
    }
    history.loss.push_back(loss_sum / static_cast<double>(count));
    history.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(count));
    if (on_epoch) on_epoch(epoch, history);
  }
  return history;
}

template <typename Real>
Matrix predict_proba(const BasicCnn<Real>& model, const Tensor<Real>& images, std::size_t batch_size) {
  if (images.shape().size() != 4) throw Error(ErrorKind::ShapeMismatch, "images must be [N, 1, side, side]");
  const std::size_t count = images.dim(0);
  Matrix out(count, model.spec.num_classes);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t stop = std::min(count, start + batch_size);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto cache = forward(model, gather_batch(images, std::span<const std::size_t>(rows)));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = cache.probabilities.row(i);
      std::copy(src.begin(), src.end(), out.row(start + i).begin());
    }
  }
  return out;
}

template <typename Real>
std::vector<std::size_t> predict(const BasicCnn<Real>& model, const Tensor<Real>& images, std::size_t batch_size) {
  return argmax_rows(predict_proba(model, images, batch_size));
}

void save_cnn(const CnnModel& model, const std::filesystem::path& spec_path,
              const std::filesystem::path& weights_path) {
  nlohmann::json j = {{"spec", to_json(model.spec)},
                      {"seed", model.seed},
                      {"weights_file", weights_path.filename().string()},
                      {"layers", model.spec.weight_names()},
                      {"dtype", "float32-le"}};
  std::ofstream js(spec_path);
  if (!js) throw Error(ErrorKind::Io, "cannot write " + spec_path.string());
  js << j.dump(2) << '\n';

  std::ofstream blob(weights_path, std::ios::binary);
  if (!blob) throw Error(ErrorKind::Io, "cannot write " + weights_path.string());
  for (const auto& t : model.weights) {
    for (float v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      const std::array<char, 4> bytes{static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                                      static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      blob.write(bytes.data(), 4);
    }
  }
}

CnnModel load_cnn(const std::filesystem::path& spec_path, const std::filesystem::path& weights_path) {
  std::ifstream js(spec_path);
  if (!js) throw Error(ErrorKind::Io, "cannot read " + spec_path.string());
  const auto j = nlohmann::json::parse(js);
  CnnModel model;
  model.spec = cnn_spec_from_json(j.at("spec"));
  model.seed = j.at("seed").get<std::uint64_t>();
  std::ifstream blob(weights_path, std::ios::binary);
  if (!blob) throw Error(ErrorKind::Io, "cannot read " + weights_path.string());
  for (const auto& shape : model.spec.weight_shapes()) {
    Tensor<float> t(shape);
    for (auto& v : t.values()) {
      std::array<unsigned char, 4> b{};
      blob.read(reinterpret_cast<char*>(b.data()), 4);
      if (!blob) throw Error(ErrorKind::Io, "weight blob too short");
      v = std::bit_cast<float>(static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24));
    }
    model.weights.push_back(std::move(t));
  }
  return model;
}

#define HMMCNN_INSTANTIATE_CNN(Real)                                                                          \
  template BasicCnn<Real> init_cnn<Real>(const CnnSpec&, std::uint64_t);                                     \
  template ForwardCache<Real> forward<Real>(const BasicCnn<Real>&, const Tensor<Real>&);                     \
  template std::vector<Tensor<Real>> backward<Real>(const BasicCnn<Real>&, const ForwardCache<Real>&,        \
                                                    const Matrix&);                                          \
  template void backward_and_step<Real>(BasicCnn<Real>&, const ForwardCache<Real>&, const Matrix&,           \
                                        const OptimizerConfig&, OptimizerState&);                            \
  template FitHistory fit<Real>(BasicCnn<Real>&, const Tensor<Real>&, const std::vector<std::size_t>&,       \
                                const OptimizerConfig&, LossKind, std::size_t, std::size_t, std::uint64_t,   \
                                const EpochCallback&);                                                    \
  template Matrix predict_proba<Real>(const BasicCnn<Real>&, const Tensor<Real>&, std::size_t);              \
  template std::vector<std::size_t> predict<Real>(const BasicCnn<Real>&, const Tensor<Real>&, std::size_t);

HMMCNN_INSTANTIATE_CNN(float)
HMMCNN_INSTANTIATE_CNN(double)

#undef HMMCNN_INSTANTIATE_CNN

}  // namespace hmmcnn::nn
