#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wbk/checkpoint.hpp"
#include "wbk/config.hpp"
#include "wbk/metrics.hpp"
#include "wbk/nets.hpp"
#include "wbk/synth.hpp"

namespace wbk {

// Dihedral transform of a square grid: optional horizontal flip followed by
// `quarter_turns` counter-clockwise rotations.
struct Dihedral {
  bool flip = false;
  int quarter_turns = 0;
};

Grid apply_dihedral(const Grid& g, Dihedral d);
Dihedral random_dihedral(CounterRng& rng);

// Corrupted copy of a binary mask used as refinement input: dilation or
// erosion, spurious blobs, partial filling toward the bounding box, blur
// and intensity noise. Values in [0, 1].
Grid degrade_mask(const Grid& gt, CounterRng& rng);

// Indices of the labeled subset used by the refinement phase:
// ceil(fraction * n) distinct indices, sorted.
std::vector<int> labeled_subset(int n, float fraction, std::uint64_t seed);

// Per-image standardized (zero mean, unit variance) stack fed to the networks.
Tensor network_input(std::span<const Grid> images);

using EpochHook = std::function<void(int epoch, double mean_loss)>;

// Refinement phase. The returned checkpoint holds refine.* parameters
// flagged frozen.
Checkpoint train_refine(const RunConfig& cfg, std::span<const Sample> data, const EpochHook& hook = {});

struct WeakOptions {
  const ModelParams* refine = nullptr;  // merged in frozen; never trained
  const Checkpoint* resume = nullptr;
  int stop_after = -1;  // stop once this many epochs are complete (-1: cfg.epochs)
};

// Main weakly supervised phase; the weak label is the tight box of each
// (augmented) ground-truth mask.
Checkpoint train_weak(const RunConfig& cfg, std::span<const Sample> data, const WeakOptions& opt = {},
                      const EpochHook& hook = {});

struct Prediction {
  Grid coarse_prob;                 // P1 at image resolution
  std::optional<Grid> refined_prob;  // sigmoid(S_refined) when a refiner is present
  BoxCoords prompt;
};

// Box prompt from a first pass with a whole-image prompt, then the prompted
// pass and, if refine.* parameters are present, the refinement.
std::vector<Prediction> infer(ModelParams& params, const NetConfig& net, std::span<const Grid> images,
                              int batch_size = 8);

struct Evaluation {
  std::vector<MetricsRow> coarse;
  std::vector<MetricsRow> refined;  // empty without a refiner
};

Evaluation evaluate(ModelParams& params, const NetConfig& net, std::span<const Sample> data,
                    int batch_size = 8);

// Mean over samples of the in-box mean |P1 - P2| (P2 upsampled to P1's
// resolution), with prompts from the automatic first pass.
double scale_gap(ModelParams& params, const RunConfig& cfg, std::span<const Sample> data);

// run meta string stored in checkpoints; architecture keys are checked on
// load.
std::string checkpoint_meta(const RunConfig& cfg, const std::string& phase);
NetConfig net_from_meta(const std::string& meta);

}  // namespace wbk
