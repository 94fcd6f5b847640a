#include "lightllm/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lightllm {

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::tanh ? tanh(x) : x;
}

Tensor conv1d(const Tensor& x, std::size_t batch, const Tensor& w, const Tensor& b,
              std::size_t kernel, std::size_t stride, std::size_t dilation, std::size_t pad_left,
              std::size_t pad_right) {
  if (x.rank() != 2 || batch == 0 || x.dim(0) % batch != 0)
    throw std::invalid_argument("conv1d: input must be (batch * length, channels)");
  if (kernel == 0 || stride == 0 || dilation == 0)
    throw std::invalid_argument("conv1d: kernel, stride and dilation must be positive");
  const std::size_t length = x.dim(0) / batch, cin = x.dim(1);
  if (w.rank() != 2 || w.dim(0) != kernel * cin)
    throw std::invalid_argument("conv1d: weight must be (kernel * in_channels, out_channels)");
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (length + pad_left + pad_right < span)
    throw std::invalid_argument("conv1d: input shorter than the kernel span");
  const std::size_t out_len = (length + pad_left + pad_right - span) / stride + 1;

  // im2col: one row of kernel * cin taps per output position.
  std::vector<std::int64_t> idx(batch * out_len * kernel * cin);
  std::size_t k = 0;
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t o = 0; o < out_len; ++o)
      for (std::size_t j = 0; j < kernel; ++j) {
        const auto pos = static_cast<std::int64_t>(o * stride + j * dilation) -
                         static_cast<std::int64_t>(pad_left);
        const bool inside = pos >= 0 && pos < static_cast<std::int64_t>(length);
        for (std::size_t c = 0; c < cin; ++c, ++k)
          idx[k] = inside ? static_cast<std::int64_t>((bi * length + pos) * cin + c) : -1;
      }
  Tensor cols = gather(x, {batch * out_len, kernel * cin}, std::move(idx));
  return linear(cols, w, b);
}

// --- GNN ---------------------------------------------------------------------

GraphContext GraphContext::from(const KnowledgeGraph& graph, double length_scale) {
  GraphContext g;
  g.sensors = graph.sensors.size();
  g.lights = graph.lights.size();
  const std::size_t n = g.nodes();
  std::vector<double> corr(n * n, 0.0), light(n * n, 0.0);
  for (const KgEdge& e : graph.edges) {
    const std::size_t a = graph.node_index(e.a), b = graph.node_index(e.b);
    auto& m = e.kind == EdgeKind::correlated ? corr : light;
    m[a * n + b] = 1.0;
    m[b * n + a] = 1.0;
  }
  for (auto* m : {&corr, &light})
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 0.0;
      for (std::size_t j = 0; j < n; ++j) deg += (*m)[i * n + j];
      if (deg > 0.0)
        for (std::size_t j = 0; j < n; ++j) (*m)[i * n + j] /= deg;
    }
  g.correlated = std::make_shared<const std::vector<double>>(std::move(corr));
  g.light_affects = std::make_shared<const std::vector<double>>(std::move(light));
  std::vector<double> pos;
  pos.reserve(n * 3);
  for (const auto& s : graph.sensors) pos.insert(pos.end(), {s.position.x, s.position.y, s.position.z});
  for (const auto& l : graph.lights) pos.insert(pos.end(), {l.position.x, l.position.y, l.position.z});
  for (double& v : pos) v /= length_scale;
  auto ranks = [](const auto& nodes) {
    std::vector<std::size_t> order(nodes.size()), slot(nodes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nodes[a].id < nodes[b].id; });
    for (std::size_t r = 0; r < order.size(); ++r) slot[order[r]] = r;
    return slot;
  };
  g.sensor_slots = ranks(graph.sensors);
  g.light_slots = ranks(graph.lights);
  g.positions = Tensor({n, 3}, std::move(pos));
  return g;
}

GnnEncoder::GnnEncoder(const GnnConfig& cfg, std::size_t feature_dim, SeededRng& rng)
    : cfg_(cfg), feature_dim_(feature_dim) {
  if (cfg.layers < 1) throw std::invalid_argument("gnn: at least one layer required");
  const std::size_t h = cfg.hidden;
  w_feature = init_weight(feature_dim, h, rng);
  b_in = init_zeros({h});
  if (cfg.node_attributes) {
    w_position = init_weight(3, h, rng);
    sensor_embedding = Tensor::randn({cfg.max_sensors, h}, rng, 1.0, true);
    light_embedding = Tensor::randn({cfg.max_lights, h}, rng, 0.1, true);
  }
  for (std::size_t l = 0; l < cfg.layers; ++l)
    layers.push_back({init_weight(h, h, rng), init_weight(h, h, rng), init_weight(h, h, rng),
                      init_zeros({h})});
}

Tensor GnnEncoder::encode(const GraphContext& graph, const Tensor& features,
                          std::size_t batch) const {
  const std::size_t s = graph.sensors, n = graph.nodes(), h = cfg_.hidden;
  if (batch == 0 || features.rank() != 2 || features.dim(0) != batch * s ||
      features.dim(1) != feature_dim_)
    throw std::invalid_argument("gnn_encode: expected " + std::to_string(batch * s) + " x " +
                                std::to_string(feature_dim_) + " sensor features, got " +
                                shape_string(features.shape()));
  if (graph.sensors > cfg_.max_sensors || graph.lights > cfg_.max_lights)
    throw std::invalid_argument("gnn_encode: graph larger than the embedding tables");

  // Per-node static part: position projection + bias + the node's embedding.
  Tensor node_static = add_bias(Tensor::zeros({n, h}), b_in);
  if (cfg_.node_attributes) {
    std::vector<std::size_t> slots;
    slots.reserve(n);
    for (std::size_t k : graph.sensor_slots) slots.push_back(k);
    for (std::size_t k : graph.light_slots) slots.push_back(cfg_.max_sensors + k);
    const Tensor tables[] = {sensor_embedding, light_embedding};
    node_static = add(add_bias(matmul(graph.positions, w_position), b_in),
                      select_rows(concat_rows(tables), slots));
  }
  Tensor projected = matmul(features, w_feature);  // (batch * s, h)

  std::vector<std::int64_t> from_features(batch * n * h), from_static(batch * n * h);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t k = (b * n + i) * h + j;
        from_features[k] = i < s ? static_cast<std::int64_t>((b * s + i) * h + j) : -1;
        from_static[k] = static_cast<std::int64_t>(i * h + j);
      }
  Tensor hidden = add(gather(projected, {batch * n, h}, std::move(from_features)),
                      gather(node_static, {batch * n, h}, std::move(from_static)));

  for (const Layer& layer : layers) {
    Tensor z = matmul(hidden, layer.w_self);
    z = add(z, matmul(block_apply(graph.correlated, n, hidden), layer.w_correlated));
    z = add(z, matmul(block_apply(graph.light_affects, n, hidden), layer.w_light));
    hidden = activate(add_bias(z, layer.bias), cfg_.activation);
  }

  std::vector<std::size_t> sensor_rows;
  sensor_rows.reserve(batch * s);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < s; ++i) sensor_rows.push_back(b * n + i);
  return select_rows(hidden, sensor_rows);
}

void GnnEncoder::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w_feature", w_feature});
  out.push_back({prefix + "b_in", b_in});
  if (cfg_.node_attributes) {
    out.push_back({prefix + "w_position", w_position});
    out.push_back({prefix + "sensor_embedding", sensor_embedding});
    out.push_back({prefix + "light_embedding", light_embedding});
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    out.push_back({p + "w_self", layers[l].w_self});
    out.push_back({p + "w_correlated", layers[l].w_correlated});
    out.push_back({p + "w_light", layers[l].w_light});
    out.push_back({p + "bias", layers[l].bias});
  }
}

// --- TCN ---------------------------------------------------------------------

TcnEncoder::TcnEncoder(const TcnConfig& cfg, std::size_t in_channels, SeededRng& rng)
    : cfg_(cfg), in_channels_(in_channels) {
  if (cfg.kernel < 2) throw std::invalid_argument("tcn: kernel must be at least 2");
  if (cfg.blocks < 1) throw std::invalid_argument("tcn: at least one block required");
  w_in = init_weight(in_channels, cfg.channels, rng);
  b_in = init_zeros({cfg.channels});
  for (std::size_t k = 0; k < cfg.blocks; ++k)
    blocks.push_back({init_weight(cfg.kernel * cfg.channels, cfg.channels, rng),
                      init_zeros({cfg.channels})});
}

Tensor TcnEncoder::encode(const Tensor& series, std::size_t batch) const {
  if (batch == 0 || series.rank() != 2 || series.dim(0) == 0 || series.dim(0) % batch != 0)
    throw std::invalid_argument("tcn_encode: empty or malformed series");
  if (series.dim(1) != in_channels_)
    throw std::invalid_argument("tcn_encode: channel count mismatch");
  Tensor x = linear(series, w_in, b_in);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const std::size_t dil = dilation(k);
    Tensor y = conv1d(x, batch, blocks[k].w, blocks[k].b, cfg_.kernel, 1, dil,
                      (cfg_.kernel - 1) * dil, 0);
    x = add(activate(y, cfg_.activation), x);
  }
  return x;
}

Tensor TcnEncoder::last_token(const Tensor& tokens, std::size_t batch) {
  const std::size_t steps = tokens.dim(0) / batch;
  std::vector<std::size_t> rows(batch);
  for (std::size_t b = 0; b < batch; ++b) rows[b] = b * steps + steps - 1;
  return select_rows(tokens, rows);
}

void TcnEncoder::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w_in", w_in});
  out.push_back({prefix + "b_in", b_in});
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    out.push_back({prefix + "block" + std::to_string(k) + ".w", blocks[k].w});
    out.push_back({prefix + "block" + std::to_string(k) + ".b", blocks[k].b});
  }
}

// --- CNN ---------------------------------------------------------------------

CnnEncoder::CnnEncoder(const CnnConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  if (cfg.kernel != 3) throw std::invalid_argument("cnn: only kernel width 3 is supported");
  w1 = init_weight(cfg.kernel, cfg.channels1, rng);
  b1 = init_zeros({cfg.channels1});
  w2 = init_weight(cfg.kernel * cfg.channels1, cfg.channels2, rng);
  b2 = init_zeros({cfg.channels2});
  w_token = init_weight(cfg.channels2, cfg.d_model, rng);
  b_token = init_zeros({cfg.d_model});
}

Tensor CnnEncoder::features(const Tensor& spectra, std::size_t batch) const {
  if (spectra.rank() != 2 || spectra.dim(1) != kInputChannels || spectra.dim(0) != batch)
    throw std::invalid_argument("cnn_encode: expected (batch, 18) spectra, got " +
                                shape_string(spectra.shape()));
  Tensor x = reshape(spectra, {batch * kInputChannels, 1});
  x = activate(conv1d(x, batch, w1, b1, 3, 1, 1, 1, 1), cfg_.activation);
  return activate(conv1d(x, batch, w2, b2, 3, 2, 1, 1, 1), cfg_.activation);
}

Tensor CnnEncoder::encode(const Tensor& spectra, std::size_t batch) const {
  Tensor tokens = linear(features(spectra, batch), w_token, b_token);  // (batch * 9, d)
  Tensor pooled = segment_mean(tokens, positions());                  // (batch, d)
  // Interleave: 9 position tokens then the pooled token, per sample.
  const std::size_t d = cfg_.d_model, per = tokens_per_sample();
  const Tensor parts[] = {tokens, pooled};
  Tensor both = concat_rows(parts);
  std::vector<std::int64_t> idx(batch * per * d);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < per; ++t) {
      const std::size_t src_row = t < positions() ? b * positions() + t : batch * positions() + b;
      for (std::size_t j = 0; j < d; ++j)
        idx[(b * per + t) * d + j] = static_cast<std::int64_t>(src_row * d + j);
    }
  return gather(both, {batch * per, d}, std::move(idx));
}

void CnnEncoder::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w1", w1});
  out.push_back({prefix + "b1", b1});
  out.push_back({prefix + "w2", w2});
  out.push_back({prefix + "b2", b2});
  out.push_back({prefix + "w_token", w_token});
  out.push_back({prefix + "b_token", b_token});
}

// --- flat stand-in -----------------------------------------------------------

FlatEncoder::FlatEncoder(std::size_t input_dim, std::size_t tokens, std::size_t d_model,
                         SeededRng& rng)
    : tokens_(tokens), d_(d_model) {
  w = init_weight(input_dim, tokens * d_model, rng);
  b = init_zeros({tokens * d_model});
}

Tensor FlatEncoder::encode(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != w.dim(0))
    throw std::invalid_argument("flat encoder: input width mismatch");
  return reshape(linear(x, w, b), {x.dim(0) * tokens_, d_});
}

void FlatEncoder::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w", w});
  out.push_back({prefix + "b", b});
}

}  // namespace lightllm
