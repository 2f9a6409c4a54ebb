#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vala/model/config.hpp"
#include "vala/model/layers.hpp"
#include "vala/numerics/ops.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

inline constexpr std::size_t kNumViews = 4;

struct ViewWeights {
  Tensor logits;  ///< N x 4 (front, rear, left, right)
  Tensor y_vp1;   ///< sigmoid(logits)
  Tensor y_vp2;   ///< softmax over the active views, 0 for a dropped right view
};

/// With num_views == 3 the right-view logit is left out of the softmax.
ViewWeights view_weights_from_logits(const Tensor& logits, int num_views);

/// Multiplies four contiguous channel groups of `feat` by y_vp1[t]. Accepts
/// (c x h x w, 4) or (N x c x h x w, N x 4).
Tensor view_modulate(const Tensor& feat, const Tensor& y_vp1);

/// S = sum_t y_vp2[t] * maps[t]. Accepts (4, K x h x w maps) or
/// (N x 4, N x K x h x w maps).
Tensor fuse(const Tensor& y_vp2, std::span<const Tensor> maps);

/// Regional attention in any form: four per-view maps of shape
/// N x K x h x w with values in (0, 1).
class AttentionModule {
 public:
  virtual ~AttentionModule() = default;
  virtual std::vector<Tensor> forward(const Tensor& feat, BnMode mode) = 0;
};

struct AttentionContext {
  std::size_t channels = 0;    ///< c of the tapped feature map
  std::size_t attributes = 0;  ///< K
  Attention mode = Attention::full;
  bool zero_init_final = true;
};

/// Builds an attention module, registering its parameters under "attn.".
using AttentionFactory =
    std::function<std::unique_ptr<AttentionModule>(const AttentionContext&, ParamRegistry&)>;

/// Directional pooling trunk plus per-view lifting convs. Supports full,
/// height_only and width_only.
std::unique_ptr<AttentionModule> make_regional_attention(const AttentionContext& ctx,
                                                         ParamRegistry& reg);

struct ForwardOutput {
  Tensor attr_logits;  ///< N x K
  ViewWeights view;    ///< undefined tensors when the view branch is off
  std::vector<Tensor> regional;  ///< 4 maps, empty when attention is none
  Tensor fused;        ///< S before spatial pooling, undefined without attention
  Tensor feat_a, feat_b, feat_c;
};

class VALAModel {
 public:
  /// `external` is required when attention is slot:external.
  explicit VALAModel(ModelConfig config, AttentionFactory external = {});
  VALAModel(const VALAModel&) = delete;
  VALAModel& operator=(const VALAModel&) = delete;
  VALAModel(VALAModel&&) = default;
  VALAModel& operator=(VALAModel&&) = default;

  /// `images` is 3 x H x W or N x 3 x H x W. Train mode uses batch
  /// statistics and updates the running ones.
  ForwardOutput forward(const Tensor& images, BnMode mode);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParameter>& parameters() { return registry_.parameters(); }
  const std::vector<NamedParameter>& parameters() const {
    return const_cast<ParamRegistry&>(registry_).parameters();
  }
  std::vector<NamedBuffer>& buffers() { return registry_.buffers(); }
  std::size_t param_count() const;

 private:
  struct Block {
    Conv conv;
    BatchNorm bn;
  };
  using Stage = std::vector<Block>;

  Tensor run_stage(const Stage& stage, const Tensor& x, BnMode mode) const;
  ViewWeights predict_view(const Tensor& feat) const;

  ModelConfig config_;
  ParamRegistry registry_;
  std::array<Stage, 3> stages_;
  bool use_stage_c_ = true;
  Conv view_reducer_;
  Linear view_fc1_, view_fc2_;
  std::unique_ptr<AttentionModule> attention_;
  std::vector<Linear> heads_;  ///< attention none: one per view, or one shared
  BatchNorm head_bn_;
};

}  // namespace vala
