#include "vala/model/vala_model.hpp"

#include "vala/numerics/errors.hpp"

namespace vala {

namespace {

// Picks column t of an N x 4 weight tensor (or entry t of a 4-vector) shaped
// to broadcast over maps of rank `map_rank`.
Tensor view_column(const Tensor& weights, std::size_t t, std::size_t map_rank) {
  if (weights.rank() == 1) {
    return reshape(slice(weights, 0, t, 1), Shape(map_rank, 1));
  }
  Shape shape(map_rank, 1);
  shape[0] = weights.dim(0);
  return reshape(slice(weights, 1, t, 1), shape);
}

class RegionalAttention final : public AttentionModule {
 public:
  RegionalAttention(const AttentionContext& ctx, ParamRegistry& reg) : mode_(ctx.mode) {
    if (mode_ == Attention::none || mode_ == Attention::external) {
      throw ConfigError("regional attention cannot be built in mode " + to_string(mode_));
    }
    const std::size_t c = ctx.channels, k = ctx.attributes;
    const Init last = ctx.zero_init_final ? Init::zero : Init::fan_in;
    trunk_ = Conv::create(reg, "attn.trunk", c, c, 1, 1, Init::kaiming, ParamGroup::deep);
    for (std::size_t t = 0; t < kNumViews; ++t) {
      const std::string v = ".view" + std::to_string(t);
      if (mode_ != Attention::width_only) {
        f1_.push_back(Conv::create(reg, "attn.f1" + v, c, k, 1, 1, last, ParamGroup::deep));
      }
      if (mode_ != Attention::height_only) {
        f2_.push_back(Conv::create(reg, "attn.f2" + v, c, k, 1, 1, last, ParamGroup::deep));
      }
      f3_.push_back(Conv::create(reg, "attn.f3" + v, c, k, 1, 1, last, ParamGroup::deep));
    }
  }

  std::vector<Tensor> forward(const Tensor& feat, BnMode) override {
    const std::size_t rank = feat.rank();
    const std::size_t h = feat.dim(rank - 2), w = feat.dim(rank - 1);
    const Tensor height_branch = directional_pool(feat, PoolAxis::width, PoolMode::max);
    const Tensor width_branch = directional_pool(feat, PoolAxis::height, PoolMode::avg);
    const Tensor mixed = h_swish(trunk_(join_directional(height_branch, width_branch)));
    const auto [f1_in, f2_in] = split_directional(mixed, h, w);

    std::vector<Tensor> maps;
    for (std::size_t t = 0; t < kNumViews; ++t) {
      Tensor y = sigmoid(f3_[t](feat));
      if (!f1_.empty()) y = mul(y, sigmoid(f1_[t](f1_in)));
      if (!f2_.empty()) y = mul(y, sigmoid(f2_[t](f2_in)));
      maps.push_back(y);
    }
    return maps;
  }

 private:
  Attention mode_;
  Conv trunk_;
  std::vector<Conv> f1_, f2_, f3_;
};

}  // namespace

ViewWeights view_weights_from_logits(const Tensor& logits, int num_views) {
  if (num_views != 3 && num_views != 4) throw ConfigError("num_views must be 3 or 4");
  const std::size_t axis = logits.rank() - 1;
  if (logits.dim(axis) != kNumViews) {
    throw ShapeError("view logits must have 4 entries, got " + shape_str(logits.shape()));
  }
  ViewWeights vw;
  vw.logits = logits;
  vw.y_vp1 = sigmoid(logits);
  if (num_views == 4) {
    vw.y_vp2 = softmax(logits);
  } else {
    const Tensor three = softmax(slice(logits, axis, 0, 3));
    Shape pad_shape = logits.shape();
    pad_shape[axis] = 1;
    vw.y_vp2 = concat(three, Tensor(pad_shape, 0.0), axis);
  }
  return vw;
}

Tensor view_modulate(const Tensor& feat, const Tensor& y_vp1) {
  const bool batched = feat.rank() == 4;
  if (!(feat.rank() == 3 || batched)) {
    throw ShapeError("view_modulate: expected c x h x w or N x c x h x w features");
  }
  const std::size_t c = feat.dim(batched ? 1 : 0);
  if (c % kNumViews != 0) {
    throw ConfigError("view_modulate: channel count " + std::to_string(c) +
                      " is not divisible by 4");
  }
  const Shape expected = batched ? Shape{feat.dim(0), kNumViews} : Shape{kNumViews};
  if (y_vp1.shape() != expected) {
    throw ShapeError("view_modulate: view weights " + shape_str(y_vp1.shape()) +
                     " do not match features " + shape_str(feat.shape()));
  }
  const std::size_t axis = batched ? 1 : 0;
  const Tensor per_channel = repeat_interleave(y_vp1, axis, c / kNumViews);
  const Shape bshape = batched ? Shape{feat.dim(0), c, 1, 1} : Shape{c, 1, 1};
  return mul(feat, reshape(per_channel, bshape));
}

Tensor fuse(const Tensor& y_vp2, std::span<const Tensor> maps) {
  if (maps.size() != kNumViews) throw ShapeError("fuse: expected 4 regional maps");
  const std::size_t rank = maps[0].rank();
  for (const auto& m : maps) {
    if (m.shape() != maps[0].shape()) throw ShapeError("fuse: regional maps differ in shape");
  }
  const bool batched = y_vp2.rank() == 2;
  if ((batched && (rank != 4 || y_vp2.dim(0) != maps[0].dim(0) || y_vp2.dim(1) != kNumViews)) ||
      (!batched && (rank != 3 || y_vp2.shape() != Shape{kNumViews}))) {
    throw ShapeError("fuse: view weights " + shape_str(y_vp2.shape()) + " do not match maps " +
                     shape_str(maps[0].shape()));
  }
  Tensor s = mul(view_column(y_vp2, 0, rank), maps[0]);
  for (std::size_t t = 1; t < kNumViews; ++t) s = add(s, mul(view_column(y_vp2, t, rank), maps[t]));
  return s;
}

std::unique_ptr<AttentionModule> make_regional_attention(const AttentionContext& ctx,
                                                         ParamRegistry& reg) {
  return std::make_unique<RegionalAttention>(ctx, reg);
}

VALAModel::VALAModel(ModelConfig config, AttentionFactory external)
    : config_(std::move(config)), registry_(config_.init_seed) {
  config_.validate();
  const auto& bb = config_.backbone;
  const auto& flags = config_.flags;
  const std::size_t k = config_.num_attributes;
  const Init last = config_.zero_init_final ? Init::zero : Init::fan_in;

  const bool attention_on = flags.attention != Attention::none;
  use_stage_c_ = !(attention_on && flags.attn_tap == Tap::B);

  std::size_t in = bb.in_channels;
  for (std::size_t s = 0; s < 3; ++s) {
    if (s == 2 && !use_stage_c_) break;
    const std::string stage = std::string("backbone.") + static_cast<char>('A' + s);
    for (std::size_t b = 0; b < bb.blocks[s]; ++b) {
      const std::string name = stage + "." + std::to_string(b);
      Block block;
      block.conv = Conv::create(registry_, name + ".conv", in, bb.channels[s], 3,
                                b == 0 ? bb.strides[s] : 1, Init::kaiming, ParamGroup::deep,
                                false);
      block.bn = BatchNorm::create(registry_, name + ".bn", bb.channels[s], ParamGroup::deep);
      stages_[s].push_back(std::move(block));
      in = bb.channels[s];
    }
  }

  if (flags.has_view_branch()) {
    const std::size_t c = bb.channels[flags.view_tap == Tap::A ? 0 : 1];
    const std::size_t r = config_.view_reducer_channels;
    view_reducer_ =
        Conv::create(registry_, "view.reducer", c, r, 3, 1, Init::kaiming, ParamGroup::shallow);
    view_fc1_ =
        Linear::create(registry_, "view.fc1", r, config_.view_hidden, Init::fan_in,
                       ParamGroup::shallow);
    view_fc2_ = Linear::create(registry_, "view.fc2", config_.view_hidden, kNumViews, last,
                               ParamGroup::shallow);
  }

  const std::size_t head_channels = bb.channels[use_stage_c_ ? 2 : 1];
  if (attention_on) {
    const AttentionContext ctx{head_channels, k, flags.attention, config_.zero_init_final};
    if (flags.attention == Attention::external) {
      if (!external) {
        throw ConfigError("attention slot:external needs an attention module to be supplied");
      }
      attention_ = external(ctx, registry_);
    } else {
      attention_ = make_regional_attention(ctx, registry_);
    }
  } else {
    const std::size_t heads = flags.use_view_weights ? kNumViews : 1;
    for (std::size_t t = 0; t < heads; ++t) {
      const std::string name = heads == 1 ? "head.linear" : "head.linear.view" + std::to_string(t);
      heads_.push_back(Linear::create(registry_, name, head_channels, k, Init::fan_in,
                                      ParamGroup::deep, heads > 1));
    }
  }
  head_bn_ = BatchNorm::create(registry_, "head.bn", k, ParamGroup::deep);
}

Tensor VALAModel::run_stage(const Stage& stage, const Tensor& x, BnMode mode) const {
  Tensor y = x;
  for (const auto& block : stage) y = relu(block.bn(block.conv(y), mode));
  return y;
}

ViewWeights VALAModel::predict_view(const Tensor& feat) const {
  const Tensor input = config_.flags.stop_view_gradient ? feat.detach() : feat;
  const Tensor reduced = relu(view_reducer_(max_pool2d(input, 3, 2, 1)));
  const Tensor pooled =
      reshape(global_avg_pool(reduced), {reduced.dim(0), config_.view_reducer_channels});
  const Tensor logits = view_fc2_(view_fc1_(pooled));
  return view_weights_from_logits(logits, config_.flags.num_views);
}

ForwardOutput VALAModel::forward(const Tensor& images, BnMode mode) {
  const auto& bb = config_.backbone;
  Tensor x = images;
  if (x.rank() == 3) x = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4 || x.dim(1) != bb.in_channels || x.dim(2) != bb.height ||
      x.dim(3) != bb.width) {
    throw ShapeError("model expects images of shape " + std::to_string(bb.in_channels) + "x" +
                     std::to_string(bb.height) + "x" + std::to_string(bb.width) + ", got " +
                     shape_str(images.shape()));
  }
  const auto& flags = config_.flags;
  const std::size_t n = x.dim(0);
  ForwardOutput out;

  auto tap_view = [&](Tensor feat) {
    out.view = predict_view(feat);
    return flags.use_view_feedback ? view_modulate(feat, out.view.y_vp1) : feat;
  };

  out.feat_a = run_stage(stages_[0], x, mode);
  Tensor flow = out.feat_a;
  if (flags.has_view_branch() && flags.view_tap == Tap::A) flow = tap_view(flow);
  out.feat_b = run_stage(stages_[1], flow, mode);
  flow = out.feat_b;
  if (flags.has_view_branch() && flags.view_tap == Tap::B) flow = tap_view(flow);
  if (use_stage_c_) {
    out.feat_c = run_stage(stages_[2], flow, mode);
    flow = out.feat_c;
  }

  const Tensor weights =
      flags.use_view_weights ? out.view.y_vp2 : Tensor({n, kNumViews}, 1.0 / kNumViews);
  const std::size_t k = config_.num_attributes;
  Tensor pooled;
  if (attention_) {
    out.regional = attention_->forward(flow, mode);
    for (const auto& m : out.regional) {
      if (m.rank() != 4 || m.dim(0) != n || m.dim(1) != k) {
        throw ShapeError("attention produced maps of shape " + shape_str(m.shape()) +
                         ", expected N x K x h x w with K = " + std::to_string(k));
      }
    }
    out.fused = fuse(weights, out.regional);
    pooled = reshape(global_avg_pool(out.fused), {n, k});
  } else {
    const Tensor g = reshape(global_avg_pool(flow), {n, flow.dim(1)});
    if (heads_.size() == 1) {
      pooled = heads_[0](g);
    } else {
      pooled = mul(view_column(weights, 0, 2), heads_[0](g));
      for (std::size_t t = 1; t < heads_.size(); ++t) {
        pooled = add(pooled, mul(view_column(weights, t, 2), heads_[t](g)));
      }
    }
  }
  out.attr_logits = head_bn_(pooled, mode);
  return out;
}

std::size_t VALAModel::param_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.value.numel();
  return total;
}

}  // namespace vala
