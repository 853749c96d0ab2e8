#include "wbk/nets.hpp"

#include <cmath>

#include "wbk/error.hpp"

namespace wbk {

namespace {
constexpr float kHeadOutputBias = 2.0f;
constexpr float kHeadOutputWeightScale = 0.05f;
}

Tensor& ModelParams::add(const std::string& name, Tensor value, bool frozen) {
  auto [it, inserted] = params_.insert_or_assign(name, Param{std::move(value), frozen});
  return it->second.value;
}

const Tensor& ModelParams::get(const std::string& name) const { return entry(name).value; }

Param& ModelParams::entry(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorKind::Data, "missing parameter '" + name + "'");
  return it->second;
}

const Param& ModelParams::entry(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorKind::Data, "missing parameter '" + name + "'");
  return it->second;
}

void ModelParams::set_frozen(const std::string& prefix, bool frozen) {
  for (auto& [name, param] : params_) {
    if (name.rfind(prefix, 0) == 0) param.frozen = frozen;
  }
}

bool ModelParams::has_prefix(const std::string& prefix) const {
  auto it = params_.lower_bound(prefix);
  return it != params_.end() && it->first.rfind(prefix, 0) == 0;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [name, param] : params_) out.params_[name] = Param{param.value.detach(), param.frozen};
  out.bn_stats_ = bn_stats_;
  return out;
}

void ModelParams::merge_from(const ModelParams& other, const std::string& prefix, bool frozen) {
  for (const auto& [name, param] : other.params_) {
    if (name.rfind(prefix, 0) == 0) params_[name] = Param{param.value.detach(), frozen};
  }
  for (const auto& [name, stats] : other.bn_stats_) {
    if (name.rfind(prefix, 0) == 0) bn_stats_[name] = stats;
  }
}

namespace {

Tensor kaiming(CounterRng& rng, int cout, int cin, int k) {
  Tensor t(Shape{cout, cin, k, k});
  const float std = std::sqrt(2.0f / static_cast<float>(cin * k * k));
  for (float& v : t.mutable_values()) v = std * rng.normal();
  return t;
}

void add_conv(ModelParams& p, const std::string& name, CounterRng& rng, int cout, int cin, int k,
              bool bias, bool frozen = false) {
  p.add(name + ".weight", kaiming(rng, cout, cin, k), frozen);
  if (bias) p.add(name + ".bias", Tensor(Shape{1, cout, 1, 1}), frozen);
}

void add_bn(ModelParams& p, const std::string& name, int c) {
  p.add(name + ".gamma", Tensor(Shape{1, c, 1, 1}, 1.0f));
  p.add(name + ".beta", Tensor(Shape{1, c, 1, 1}, 0.0f));
  p.bn(name) = BatchNormStats{std::vector<float>(static_cast<std::size_t>(c), 0.0f),
                              std::vector<float>(static_cast<std::size_t>(c), 1.0f)};
}

// Edge-replicating padding everywhere: zero padding hands the box losses a
// border cue that they latch onto.
Tensor conv(const Tensor& x, const ModelParams& p, const std::string& name, Conv2dOptions opt = {1, 1, 1}) {
  const std::string b = name + ".bias";
  opt.replicate = true;
  return conv2d(x, p.get(name + ".weight"), p.contains(b) ? p.get(b) : Tensor(), opt);
}

Tensor bn(const Tensor& x, ModelParams& p, const std::string& name, bool training) {
  return batch_norm(x, p.get(name + ".gamma"), p.get(name + ".beta"), &p.bn(name), training);
}

Tensor conv_bn_relu(const Tensor& x, ModelParams& p, const std::string& name, bool training, int stride = 1) {
  return relu(bn(conv(x, p, name + ".conv", {stride, 1, 1}), p, name + ".bn", training));
}

void init_res_block(ModelParams& p, const std::string& name, CounterRng& rng, int c) {
  add_conv(p, name + ".conv1", rng, c, c, 3, false);
  add_bn(p, name + ".bn1", c);
  add_conv(p, name + ".conv2", rng, c, c, 3, false);
  add_bn(p, name + ".bn2", c);
}

Tensor res_block(const Tensor& x, ModelParams& p, const std::string& name, bool training) {
  Tensor h = relu(bn(conv(x, p, name + ".conv1"), p, name + ".bn1", training));
  h = bn(conv(h, p, name + ".conv2"), p, name + ".bn2", training);
  return relu(add(x, h));
}

void check_image(const char* op, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.h % 4 != 0 || s.w % 4 != 0 || s.h < 8 || s.w < 8) {
    throw ShapeError(std::string(op) + ": spatial size must be a multiple of 4 (>= 8), got " + s.str());
  }
}

}  // namespace

void init_global_encoder(ModelParams& p, const NetConfig& cfg, CounterRng& rng) {
  const int half = std::max(1, cfg.features / 2);
  add_conv(p, "encoder.conv1", rng, half, cfg.in_channels, 3, true, true);
  add_conv(p, "encoder.conv2", rng, cfg.features, half, 3, true, true);
  add_conv(p, "encoder.conv3", rng, cfg.features, cfg.features, 3, true, true);
  add_conv(p, "encoder.conv4", rng, cfg.features, cfg.features, 3, true, true);
}

void init_cnn_block(ModelParams& p, const NetConfig& cfg, CounterRng& rng) {
  add_conv(p, "cnn.stage1.a.conv", rng, cfg.cnn_width, cfg.in_channels, 3, false);
  add_bn(p, "cnn.stage1.a.bn", cfg.cnn_width);
  add_conv(p, "cnn.stage1.b.conv", rng, cfg.cnn_width, cfg.cnn_width, 3, false);
  add_bn(p, "cnn.stage1.b.bn", cfg.cnn_width);
  add_conv(p, "cnn.stage2.a.conv", rng, cfg.features, cfg.cnn_width, 3, false);
  add_bn(p, "cnn.stage2.a.bn", cfg.features);
  add_conv(p, "cnn.stage2.b.conv", rng, cfg.features, cfg.features, 3, false);
  add_bn(p, "cnn.stage2.b.bn", cfg.features);
}

void init_gate(ModelParams& p) { p.add("gate.alpha_logit", Tensor::scalar(0.0f)); }

void init_seg_head(ModelParams& p, const NetConfig& cfg, CounterRng& rng) {
  const int hw = cfg.head_width;
  const int fine = std::max(1, hw / 2);
  add_conv(p, "head.conv1", rng, hw, cfg.features + 1, 3, true);
  add_conv(p, "head.conv2", rng, hw, hw, 3, true);
  add_conv(p, "head.proj", rng, fine, hw, 1, true);
  add_conv(p, "head.fine", rng, fine, fine + cfg.in_channels, 3, true);
  add_conv(p, "head.out", rng, 1, fine, 1, true);
  // Start with most of the image predicted as foreground (p ~ 0.88). The
  // projection losses then carve away rows and columns outside the box; from
  // a near-empty start they are satisfied by thin lines and never fill in.
  // The small output weights keep some seeds from starting saturated.
  Tensor w = p.get("head.out.weight").detach();
  for (float& v : w.mutable_values()) v *= kHeadOutputWeightScale;
  p.add("head.out.weight", std::move(w));
  p.add("head.out.bias", Tensor(Shape{1, 1, 1, 1}, kHeadOutputBias));
}

void init_detail_refine(ModelParams& p, const NetConfig& cfg, CounterRng& rng) {
  const auto [c1, c2, c3] = cfg.refine_channels;
  const int cin = cfg.in_channels + 1;
  add_conv(p, "refine.enc1.conv", rng, c1, cin, 3, false);
  add_bn(p, "refine.enc1.bn", c1);
  init_res_block(p, "refine.enc1.res", rng, c1);
  add_conv(p, "refine.enc2.conv", rng, c2, c1, 3, false);
  add_bn(p, "refine.enc2.bn", c2);
  init_res_block(p, "refine.enc2.res", rng, c2);
  add_conv(p, "refine.enc3.conv", rng, c3, c2, 3, false);
  add_bn(p, "refine.enc3.bn", c3);
  init_res_block(p, "refine.enc3.res", rng, c3);
  add_conv(p, "refine.dec2.conv", rng, c2, c3 + c2, 3, false);
  add_bn(p, "refine.dec2.bn", c2);
  init_res_block(p, "refine.dec2.res", rng, c2);
  add_conv(p, "refine.dec1.conv", rng, c1, c2 + c1, 3, false);
  add_bn(p, "refine.dec1.bn", c1);
  init_res_block(p, "refine.dec1.res", rng, c1);
  // Zero-initialized output layer: refinement starts as the identity.
  p.add("refine.out.weight", Tensor(Shape{1, c1, 3, 3}));
  p.add("refine.out.bias", Tensor(Shape{1, 1, 1, 1}));
}

ModelParams init_segmenter(const NetConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  CounterRng enc = CounterRng::split(seed, 0, stream::kInit);
  CounterRng cnn = CounterRng::split(seed, 1, stream::kInit);
  CounterRng head = CounterRng::split(seed, 2, stream::kInit);
  init_global_encoder(p, cfg, enc);
  if (cfg.use_cnn) {
    init_cnn_block(p, cfg, cnn);
    init_gate(p);
  }
  init_seg_head(p, cfg, head);
  return p;
}

ModelParams init_refiner(const NetConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  CounterRng rng = CounterRng::split(seed, 3, stream::kInit);
  init_detail_refine(p, cfg, rng);
  return p;
}

Tensor global_encoder_forward(const Tensor& image, const ModelParams& p) {
  check_image("global_encoder_forward", image);
  Tensor x = relu(conv(image, p, "encoder.conv1", {2, 1, 1}));
  x = relu(conv(x, p, "encoder.conv2", {2, 1, 1}));
  x = relu(conv(x, p, "encoder.conv3", {1, 2, 2}));
  return conv(x, p, "encoder.conv4", {1, 4, 4});
}

CnnOutput cnn_block_forward(const Tensor& image, ModelParams& p, bool training) {
  check_image("cnn_block_forward", image);
  auto stage = [&](const Tensor& x, const std::string& name) {
    Tensor y = conv_bn_relu(x, p, name + ".a", training, 2);
    Tensor z = bn(conv(y, p, name + ".b.conv"), p, name + ".b.bn", training);
    return relu(add(y, z));
  };
  CnnOutput out;
  out.tap1 = stage(image, "cnn.stage1");
  out.tap2 = stage(out.tap1, "cnn.stage2");
  out.features = out.tap2;
  return out;
}

Tensor fusion_gate(const Tensor& x_global, const Tensor& x_cnn, const Tensor& alpha_logit) {
  if (!(x_global.shape() == x_cnn.shape())) {
    throw ShapeError("fusion_gate: shape mismatch " + x_global.shape().str() + " vs " + x_cnn.shape().str());
  }
  const Tensor alpha = sigmoid(alpha_logit);
  return add(scale(x_global, alpha), scale(x_cnn, affine(alpha, -1.0f, 1.0f)));
}

Tensor fused_features(const Tensor& image, ModelParams& p, const NetConfig& cfg, bool training) {
  Tensor x_global = global_encoder_forward(image, p);
  if (!cfg.use_cnn) return x_global;
  const CnnOutput cnn = cnn_block_forward(image, p, training);
  return fusion_gate(x_global, cnn.features, p.get("gate.alpha_logit"));
}

Tensor prompt_channel(std::span<const BoxCoords> boxes, int image_h, int image_w, int feat_h, int feat_w) {
  std::vector<Grid> planes;
  planes.reserve(boxes.size());
  for (const BoxCoords& b : boxes) {
    planes.push_back(rasterize(rescale_coords(b, image_h, image_w, feat_h, feat_w), feat_h, feat_w));
  }
  return Tensor::stack(planes);
}

HeadOutput seg_head_forward(const Tensor& fused, const Tensor& prompt, const Tensor& image,
                            const ModelParams& p) {
  const Shape& fs = fused.shape();
  const Shape& ps = prompt.shape();
  const Shape& is = image.shape();
  if (ps.n != fs.n || ps.c != 1 || ps.h != fs.h || ps.w != fs.w || is.n != fs.n) {
    throw ShapeError("seg_head_forward: features " + fs.str() + ", prompt " + ps.str() + ", image " + is.str());
  }
  const Tensor parts[] = {fused, prompt};
  Tensor x = relu(conv(concat_channels(parts), p, "head.conv1"));
  x = relu(conv(x, p, "head.conv2"));
  x = conv(x, p, "head.proj", {1, 0, 1});
  x = bilinear_resize(x, is.h, is.w);
  const Tensor fine_in[] = {x, image};
  x = relu(conv(concat_channels(fine_in), p, "head.fine"));
  HeadOutput out;
  out.logits = conv(x, p, "head.out", {1, 0, 1});
  out.prob = sigmoid(out.logits);
  return out;
}

ScalePair seg_two_scales(const Tensor& image1, const Tensor& image2, std::span<const BoxCoords> prompts,
                         ModelParams& p, const NetConfig& cfg, bool training) {
  const Shape& s1 = image1.shape();
  const Tensor f1 = fused_features(image1, p, cfg, training);
  const Tensor f2 = fused_features(image2, p, cfg, training);
  const Tensor pr1 = prompt_channel(prompts, s1.h, s1.w, f1.shape().h, f1.shape().w);
  const Tensor pr2 = prompt_channel(prompts, s1.h, s1.w, f2.shape().h, f2.shape().w);
  return ScalePair{seg_head_forward(f1, pr1, image1, p), seg_head_forward(f2, pr2, image2, p)};
}

RefineIO detail_refine_forward(const Tensor& s_coarse, const Tensor& image, ModelParams& p, bool training) {
  const Shape& cs = s_coarse.shape();
  const Shape& is = image.shape();
  if (cs.n != is.n || cs.c != 1 || cs.h != is.h || cs.w != is.w) {
    throw ShapeError("detail_refine_forward: coarse " + cs.str() + " vs image " + is.str());
  }
  const Tensor in[] = {image, s_coarse};
  const Tensor e1 = res_block(conv_bn_relu(concat_channels(in), p, "refine.enc1", training), p,
                              "refine.enc1.res", training);
  const Tensor e2 = res_block(conv_bn_relu(maxpool2d(e1), p, "refine.enc2", training), p,
                              "refine.enc2.res", training);
  const Tensor e3 = res_block(conv_bn_relu(maxpool2d(e2), p, "refine.enc3", training), p,
                              "refine.enc3.res", training);
  const Tensor up2[] = {bilinear_resize(e3, e2.shape().h, e2.shape().w), e2};
  const Tensor d2 = res_block(conv_bn_relu(concat_channels(up2), p, "refine.dec2", training), p,
                              "refine.dec2.res", training);
  const Tensor up1[] = {bilinear_resize(d2, e1.shape().h, e1.shape().w), e1};
  const Tensor d1 = res_block(conv_bn_relu(concat_channels(up1), p, "refine.dec1", training), p,
                              "refine.dec1.res", training);
  RefineIO io;
  io.s_coarse = s_coarse;
  io.s_residual = conv(d1, p, "refine.out");
  io.s_refined = add(s_coarse, io.s_residual);
  return io;
}

}  // namespace wbk
