#pragma once

// Toy-scale networks: a frozen global-encoder stand-in, a trainable residual
// CNN block, the learnable fusion gate, a box-prompted segmentation head and
// the residual encoder-decoder used for boundary refinement.

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wbk/rng.hpp"
#include "wbk/tensor.hpp"
#include "wbk/weakbox.hpp"

namespace wbk {

struct NetConfig {
  int in_channels = 1;
  int features = 16;    // encoder / CNN-block output channels
  int cnn_width = 8;    // first CNN stage width
  int head_width = 16;
  std::array<int, 3> refine_channels{8, 16, 32};
  bool use_cnn = true;  // false: the head sees encoder features only
};

struct Param {
  Tensor value;
  bool frozen = false;
};

class ModelParams {
 public:
  Tensor& add(const std::string& name, Tensor value, bool frozen = false);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Param& entry(const std::string& name);
  const Param& entry(const std::string& name) const;

  // Sets the frozen flag on every parameter whose name starts with `prefix`.
  void set_frozen(const std::string& prefix, bool frozen);
  bool has_prefix(const std::string& prefix) const;

  BatchNormStats& bn(const std::string& name) { return bn_stats_[name]; }
  const std::map<std::string, BatchNormStats>& bn_stats() const { return bn_stats_; }
  std::map<std::string, BatchNormStats>& bn_stats() { return bn_stats_; }

  const std::map<std::string, Param>& params() const { return params_; }
  std::map<std::string, Param>& params() { return params_; }

  // Deep copy; plain copies share tensor storage.
  ModelParams clone() const;

  // Copies every parameter and BN statistic under `prefix` from `other`.
  void merge_from(const ModelParams& other, const std::string& prefix, bool frozen);

 private:
  std::map<std::string, Param> params_;
  std::map<std::string, BatchNormStats> bn_stats_;
};

void init_global_encoder(ModelParams& p, const NetConfig& cfg, CounterRng& rng);
void init_cnn_block(ModelParams& p, const NetConfig& cfg, CounterRng& rng);
void init_gate(ModelParams& p);
void init_seg_head(ModelParams& p, const NetConfig& cfg, CounterRng& rng);
void init_detail_refine(ModelParams& p, const NetConfig& cfg, CounterRng& rng);

// Encoder (frozen), CNN block, gate and head, seeded from `seed`.
ModelParams init_segmenter(const NetConfig& cfg, std::uint64_t seed);
ModelParams init_refiner(const NetConfig& cfg, std::uint64_t seed);

// Stacked strided and dilated convolutions: (B, C, H, W) -> (B, features, H/4, W/4).
Tensor global_encoder_forward(const Tensor& image, const ModelParams& p);

struct CnnOutput {
  Tensor features;  // (B, features, H/4, W/4)
  Tensor tap1;      // first residual stage, H/2
  Tensor tap2;      // second residual stage (== features)
};

CnnOutput cnn_block_forward(const Tensor& image, ModelParams& p, bool training);

// alpha * x_global + (1 - alpha) * x_cnn with alpha = sigmoid(alpha_logit).
Tensor fusion_gate(const Tensor& x_global, const Tensor& x_cnn, const Tensor& alpha_logit);

// Encoder features, gated with the CNN block when cfg.use_cnn.
Tensor fused_features(const Tensor& image, ModelParams& p, const NetConfig& cfg, bool training);

// {0,1} prompt channel at feature resolution from boxes given in image
// coordinates.
Tensor prompt_channel(std::span<const BoxCoords> boxes, int image_h, int image_w, int feat_h,
                      int feat_w);

struct HeadOutput {
  Tensor logits;  // (B, 1, H, W)
  Tensor prob;    // sigmoid(logits)
};

HeadOutput seg_head_forward(const Tensor& fused, const Tensor& prompt, const Tensor& image,
                            const ModelParams& p);

// The head applied to two input scales with shared weights; P2 stays at the
// second scale's resolution.
struct ScalePair {
  HeadOutput primary;    // at the first scale of the pair
  HeadOutput secondary;  // at the second scale
};

ScalePair seg_two_scales(const Tensor& image1, const Tensor& image2, std::span<const BoxCoords> prompts,
                         ModelParams& p, const NetConfig& cfg, bool training);

struct RefineIO {
  Tensor s_coarse;
  Tensor s_residual;
  Tensor s_refined;  // s_coarse + s_residual
};

// Residual encoder-decoder over [image, s_coarse]; s_coarse is a logit map.
RefineIO detail_refine_forward(const Tensor& s_coarse, const Tensor& image, ModelParams& p,
                               bool training);

}  // namespace wbk
