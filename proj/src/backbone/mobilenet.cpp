#include "splicedet/backbone/mobilenet.hpp"

#include <cmath>

#include "splicedet/core/error.hpp"

namespace splicedet::backbone {

std::vector<StageRow> default_stage_spec() {
    using Op = StageRow::Op;
    return {
        {Op::standard_conv, 32, 1, 2},        // 224 -> 112
        {Op::depthwise_separable, 64, 1, 1},  //        C1
        {Op::depthwise_separable, 128, 1, 2},  // -> 56
        {Op::depthwise_separable, 128, 1, 1},  //       C2
        {Op::depthwise_separable, 256, 1, 2},  // -> 28
        {Op::depthwise_separable, 256, 1, 1},  //       C3
        {Op::depthwise_separable, 512, 1, 2},  // -> 14
        {Op::depthwise_separable, 512, 5, 1},  //       C4
        {Op::depthwise_separable, 1024, 1, 2},  // -> 7
        {Op::depthwise_separable, 1024, 1, 1},  //      C5
    };
}

void BackboneConfig::validate() const {
    check(depth_multiplier > 0.0 && depth_multiplier <= 1.0,
          "backbone: depth_multiplier must be in (0,1]");
    check(resolution_multiplier > 0.0 && resolution_multiplier <= 1.0,
          "backbone: resolution_multiplier must be in (0,1]");
    check(!stage_spec.empty(), "backbone: empty stage spec");
    const auto& first = stage_spec.front();
    check(first.op == StageRow::Op::standard_conv && first.out_channels == 32 && first.stride == 2,
          "backbone: first stage row must be a 32-channel standard conv with stride 2");
    for (const auto& row : stage_spec) {
        check(row.stride == 1 || row.stride == 2, "backbone: strides must be 1 or 2");
        check(row.repeat >= 1 && row.out_channels >= 1, "backbone: bad stage row");
    }
}

int round_channels(int channels, double multiplier) {
    const double scaled = channels * multiplier;
    const int rounded = static_cast<int>(std::lround(scaled / 8.0)) * 8;
    return std::max(8, rounded);
}

MobileNetV1::MobileNetV1(const BackboneConfig& config, Rng& rng, nn::ParamRegistry& reg,
                         const std::string& prefix) {
    config.validate();
    const double dm = config.depth_multiplier;

    const int stem_c = round_channels(config.stage_spec.front().out_channels, dm);
    stem_.build(prefix + ".conv0", 3, stem_c, 3, 2, 1, /*bias=*/false, rng, reg);
    stem_bn_.build(prefix + ".conv0", stem_c, reg);

    // Expand the (c, n, s) rows into individual blocks; only the first layer
    // of each row carries the row's stride. Blocks are built in place after a
    // reserve so the registered parameter pointers stay valid.
    int total_blocks = 0;
    for (size_t row_i = 1; row_i < config.stage_spec.size(); ++row_i)
        total_blocks += config.stage_spec[row_i].repeat;
    blocks_.reserve(static_cast<size_t>(total_blocks));

    int in_c = stem_c;
    int block_index = 1;
    int stride_product = 2;
    int stage = 0;
    stage_block_.fill(-1);
    stage_channels_.fill(0);
    auto note_stage = [&](int stride, int channels, int index) {
        // A stage ends on the last block before the next downsampling; record
        // the running deepest block at each stride level.
        (void)stride;
        if (stage >= 1 && stage <= 5) {
            stage_block_[static_cast<size_t>(stage - 1)] = index;
            stage_channels_[static_cast<size_t>(stage - 1)] = channels;
        }
    };
    // Stem output is the first stride-2 map; stage counting starts at C1 once
    // the first depthwise block has run.
    for (size_t row_i = 1; row_i < config.stage_spec.size(); ++row_i) {
        const auto& row = config.stage_spec[row_i];
        check(row.op == StageRow::Op::depthwise_separable,
              "backbone: rows after the stem must be depthwise separable");
        const int out_c = round_channels(row.out_channels, dm);
        for (int r = 0; r < row.repeat; ++r) {
            const int stride = r == 0 ? row.stride : 1;
            if (stride == 2) {
                stride_product *= 2;
            }
            blocks_.emplace_back();
            Block& block = blocks_.back();
            const std::string name = prefix + ".conv" + std::to_string(block_index);
            block.dw.build(name + ".dw", in_c, 3, stride, 1, rng, reg);
            block.bn1.build(name + ".dw", in_c, reg);
            block.pw.build(name + ".pw", in_c, out_c, 1, 1, 0, /*bias=*/false, rng, reg);
            block.bn2.build(name + ".pw", out_c, reg);
            block.out_channels = out_c;
            in_c = out_c;
            // Track the deepest block at each stride: stage k lives at stride 2^k.
            stage = static_cast<int>(std::lround(std::log2(stride_product)));
            note_stage(stride_product, out_c, block_index - 1);
            ++block_index;
        }
    }
    check(stage_block_[4] >= 0, "backbone: stage spec never reaches stride 32");
}

StageOutputs MobileNetV1::forward(const Tensor& x, bool training, Cache* cache,
                                  bool bn_batch_stats) {
    check(x.ndim() == 4 && x.dim(1) == stem_.w.value.dim(1), "backbone: bad input shape");
    const bool live_bn = training && bn_batch_stats;
    if (cache) {
        cache->blocks.resize(blocks_.size());
        cache->bn_batch_stats = bn_batch_stats;
    }

    Tensor h = stem_.forward(x, cache ? &cache->stem : nullptr);
    {
        const int c = h.dim(1), s = h.dim(2) * h.dim(3);
        Tensor bn = live_bn
                        ? stem_bn_.forward(h, 1, c, s, true, cache ? &cache->stem_bn : nullptr)
                        : (cache ? stem_bn_.forward_frozen(h, 1, c, s, &cache->stem_fbn)
                                 : (bn_batch_stats ? stem_bn_.forward_eval_batch(h, 1, c, s)
                                                   : stem_bn_.forward_infer(h, 1, c, s)));
        if (cache) cache->stem_pre_act = bn;
        Tensor act;
        kernels::relu6_forward(bn, act);
        h = std::move(act);
    }

    StageOutputs out;
    for (size_t i = 0; i < blocks_.size(); ++i) {
        auto& blk = blocks_[i];
        auto* bc = cache ? &cache->blocks[i] : nullptr;
        Tensor t = blk.dw.forward(h, bc ? &bc->dw : nullptr);
        {
            const int c = t.dim(1), s = t.dim(2) * t.dim(3);
            t = live_bn ? blk.bn1.forward(t, 1, c, s, true, bc ? &bc->bn1 : nullptr)
                        : (bc ? blk.bn1.forward_frozen(t, 1, c, s, &bc->fbn1)
                              : (bn_batch_stats ? blk.bn1.forward_eval_batch(t, 1, c, s)
                                                : blk.bn1.forward_infer(t, 1, c, s)));
        }
        if (bc) bc->pre_act1 = t;
        {
            Tensor act;
            kernels::relu6_forward(t, act);
            t = std::move(act);
        }
        t = blk.pw.forward(t, bc ? &bc->pw : nullptr);
        {
            const int c = t.dim(1), s = t.dim(2) * t.dim(3);
            t = live_bn ? blk.bn2.forward(t, 1, c, s, true, bc ? &bc->bn2 : nullptr)
                        : (bc ? blk.bn2.forward_frozen(t, 1, c, s, &bc->fbn2)
                              : (bn_batch_stats ? blk.bn2.forward_eval_batch(t, 1, c, s)
                                                : blk.bn2.forward_infer(t, 1, c, s)));
        }
        if (bc) bc->pre_act2 = t;
        {
            Tensor act;
            kernels::relu6_forward(t, act);
            t = std::move(act);
        }
        h = std::move(t);
        for (int s = 0; s < 5; ++s)
            if (stage_block_[static_cast<size_t>(s)] == static_cast<int>(i)) out.c[static_cast<size_t>(s)] = h;
    }
    return out;
}

void MobileNetV1::backward(const StageOutputs& d_stages, const Cache& cache) {
    Tensor dh;  // gradient flowing into the output of block i
    for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) {
        // Merge the gradient arriving from any stage output ending here.
        for (int s = 0; s < 5; ++s) {
            if (stage_block_[static_cast<size_t>(s)] != i) continue;
            const Tensor& dstage = d_stages.c[static_cast<size_t>(s)];
            if (dstage.empty()) continue;
            if (dh.empty()) {
                dh = dstage;
            } else {
                for (std::int64_t k = 0; k < dh.numel(); ++k) dh[k] += dstage[k];
            }
        }
        if (dh.empty()) continue;  // nothing depends on blocks at or above i yet

        auto& blk = blocks_[static_cast<size_t>(i)];
        const auto& bc = cache.blocks[static_cast<size_t>(i)];
        Tensor d = Tensor(bc.pre_act2.shape());
        kernels::relu6_backward(dh, bc.pre_act2, d);
        d = cache.bn_batch_stats ? blk.bn2.backward(d, bc.bn2) : blk.bn2.backward_frozen(d, bc.fbn2);
        d = blk.pw.backward(d, bc.pw);
        Tensor d1 = Tensor(bc.pre_act1.shape());
        kernels::relu6_backward(d, bc.pre_act1, d1);
        d1 = cache.bn_batch_stats ? blk.bn1.backward(d1, bc.bn1) : blk.bn1.backward_frozen(d1, bc.fbn1);
        dh = blk.dw.backward(d1, bc.dw);
    }
    if (dh.empty()) return;
    Tensor d = Tensor(cache.stem_pre_act.shape());
    kernels::relu6_backward(dh, cache.stem_pre_act, d);
    d = cache.bn_batch_stats ? stem_bn_.backward(d, cache.stem_bn)
                             : stem_bn_.backward_frozen(d, cache.stem_fbn);
    stem_.backward(d, cache.stem);  // input gradient discarded
}

}  // namespace splicedet::backbone
