#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "splicedet/core/rng.hpp"
#include "splicedet/kernels/batchnorm.hpp"
#include "splicedet/kernels/conv2d.hpp"
#include "splicedet/kernels/conv_transpose.hpp"
#include "splicedet/kernels/dense.hpp"
#include "splicedet/kernels/depthwise.hpp"
#include "splicedet/kernels/elementwise.hpp"
#include "splicedet/kernels/roi_align.hpp"

using namespace splicedet;
using core::DTensor;
using core::Rng;
using core::Tensor;
using core::TensorT;

namespace {

template <typename T>
TensorT<T> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    TensorT<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(rng.normal(0.0, scale));
    return t;
}

// Independent quadruple-loop convolution oracle (the implementation works in
// row form; this one walks output elements directly).
DTensor naive_conv2d(const DTensor& x, const DTensor& w, const DTensor* bias, int stride, int pad) {
    const int n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    DTensor y({n_batch, cout, ho, wo});
    for (int n = 0; n < n_batch; ++n)
        for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias ? (*bias)[co] : 0.0;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += x.at4(n, ci, iy, ix) * w.at4(co, ci, ky, kx);
                            }
                    y.at4(n, co, oy, ox) = acc;
                }
    return y;
}

double max_rel_err(const DTensor& a, const DTensor& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-9});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

// Central finite differences of a scalar functional with respect to one
// tensor argument.
DTensor finite_diff(const std::function<double()>& f, DTensor& param, double eps = 1e-5) {
    DTensor grad(param.shape());
    for (std::int64_t i = 0; i < param.numel(); ++i) {
        const double saved = param[i];
        param[i] = saved + eps;
        const double up = f();
        param[i] = saved - eps;
        const double down = f();
        param[i] = saved;
        grad[i] = (up - down) / (2 * eps);
    }
    return grad;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-9});
}

}  // namespace

TEST_CASE("conv2d forward matches the naive oracle") {
    Rng rng(11);
    for (const auto& [stride, pad, bias] : {std::tuple{1, 1, true}, std::tuple{2, 1, false},
                                            std::tuple{1, 0, true}, std::tuple{2, 0, false}}) {
        const DTensor x = random_tensor<double>({2, 3, 9, 8}, rng);
        const DTensor w = random_tensor<double>({4, 3, 3, 3}, rng);
        const DTensor b = random_tensor<double>({4}, rng);
        DTensor y;
        kernels::serial::conv2d_forward(x, w, bias ? &b : nullptr, stride, pad, y);
        const DTensor expected = naive_conv2d(x, w, bias ? &b : nullptr, stride, pad);
        CHECK(max_rel_err(y, expected) < 1e-12);
    }
}

TEST_CASE("serial and OpenMP kernel flavors are bitwise identical") {
    Rng rng(5);
    const Tensor x = random_tensor<float>({2, 5, 13, 11}, rng);
    const Tensor w = random_tensor<float>({7, 5, 3, 3}, rng);
    const Tensor b = random_tensor<float>({7}, rng);
    Tensor ys, yp;
    kernels::serial::conv2d_forward(x, w, &b, 2, 1, ys);
    kernels::par_impl::conv2d_forward(x, w, &b, 2, 1, yp);
    CHECK(bitwise_equal(ys, yp));

    const Tensor dy = random_tensor<float>(ys.shape(), rng);
    Tensor dxs, dxp;
    kernels::serial::conv2d_backward_input(dy, w, 2, 1, x.shape(), dxs);
    kernels::par_impl::conv2d_backward_input(dy, w, 2, 1, x.shape(), dxp);
    CHECK(bitwise_equal(dxs, dxp));

    Tensor dws({7, 5, 3, 3}), dwp({7, 5, 3, 3}), dbs({7}), dbp({7});
    kernels::serial::conv2d_backward_params(dy, x, 2, 1, dws, &dbs);
    kernels::par_impl::conv2d_backward_params(dy, x, 2, 1, dwp, &dbp);
    CHECK(bitwise_equal(dws, dwp));
    CHECK(bitwise_equal(dbs, dbp));

    const Tensor dwx = random_tensor<float>({5, 3, 3}, rng);
    Tensor das, dap;
    kernels::serial::depthwise_forward(x, dwx, 1, 1, das);
    kernels::par_impl::depthwise_forward(x, dwx, 1, 1, dap);
    CHECK(bitwise_equal(das, dap));

    const Tensor xm = random_tensor<float>({9, 17}, rng);
    const Tensor wm = random_tensor<float>({17, 13}, rng);
    Tensor yms, ymp;
    kernels::serial::dense_forward(xm, wm, static_cast<const Tensor*>(nullptr), yms);
    kernels::par_impl::dense_forward(xm, wm, static_cast<const Tensor*>(nullptr), ymp);
    CHECK(bitwise_equal(yms, ymp));

    const Tensor feat = random_tensor<float>({4, 16, 16}, rng);
    std::vector<std::array<float, 4>> rois = {{3.3f, 4.1f, 30.7f, 28.2f}, {0.5f, 1.5f, 10.0f, 9.0f}};
    Tensor ras, rap;
    kernels::serial::roi_align_forward(feat, rois, 0.5f, 7, 7, 2, ras);
    kernels::par_impl::roi_align_forward(feat, rois, 0.5f, 7, 7, 2, rap);
    CHECK(bitwise_equal(ras, rap));
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(17);
    for (const int stride : {1, 2}) {
        DTensor x = random_tensor<double>({1, 2, 6, 5}, rng);
        DTensor w = random_tensor<double>({3, 2, 3, 3}, rng);
        DTensor b = random_tensor<double>({3}, rng);
        Rng r2(23);
        DTensor dy_fixed;
        {
            DTensor y;
            kernels::serial::conv2d_forward(x, w, &b, stride, 1, y);
            dy_fixed = random_tensor<double>(y.shape(), r2);
        }
        auto loss = [&]() {
            DTensor y;
            kernels::serial::conv2d_forward(x, w, &b, stride, 1, y);
            double acc = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * dy_fixed[i];
            return acc;
        };
        DTensor dx(x.shape());
        DTensor dw(w.shape()), db(b.shape());
        kernels::serial::conv2d_backward_input(dy_fixed, w, stride, 1, x.shape(), dx);
        kernels::serial::conv2d_backward_params(dy_fixed, x, stride, 1, dw, &db);
        CHECK(max_rel_err(dx, finite_diff(loss, x)) < 1e-6);
        CHECK(max_rel_err(dw, finite_diff(loss, w)) < 1e-6);
        CHECK(max_rel_err(db, finite_diff(loss, b)) < 1e-6);
    }
}

TEST_CASE("depthwise and dense gradients match finite differences") {
    Rng rng(29);
    {
        DTensor x = random_tensor<double>({1, 3, 6, 6}, rng);
        DTensor w = random_tensor<double>({3, 3, 3}, rng);
        DTensor y0;
        kernels::serial::depthwise_forward(x, w, 2, 1, y0);
        Rng r2(31);
        const DTensor dy = random_tensor<double>(y0.shape(), r2);
        auto loss = [&]() {
            DTensor y;
            kernels::serial::depthwise_forward(x, w, 2, 1, y);
            double acc = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * dy[i];
            return acc;
        };
        DTensor dx(x.shape()), dw(w.shape());
        kernels::serial::depthwise_backward_input(dy, w, 2, 1, x.shape(), dx);
        kernels::serial::depthwise_backward_params(dy, x, 2, 1, dw);
        CHECK(max_rel_err(dx, finite_diff(loss, x)) < 1e-6);
        CHECK(max_rel_err(dw, finite_diff(loss, w)) < 1e-6);
    }
    {
        DTensor x = random_tensor<double>({4, 6}, rng);
        DTensor w = random_tensor<double>({6, 3}, rng);
        DTensor b = random_tensor<double>({3}, rng);
        Rng r2(37);
        const DTensor dy = random_tensor<double>({4, 3}, r2);
        auto loss = [&]() {
            DTensor y;
            kernels::serial::dense_forward(x, w, &b, y);
            double acc = 0;
            for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * dy[i];
            return acc;
        };
        DTensor dx(x.shape()), dw(w.shape()), db(b.shape());
        kernels::serial::dense_backward(dy, x, w, dx, dw, &db);
        CHECK(max_rel_err(dx, finite_diff(loss, x)) < 1e-6);
        CHECK(max_rel_err(dw, finite_diff(loss, w)) < 1e-6);
        CHECK(max_rel_err(db, finite_diff(loss, b)) < 1e-6);
    }
}

TEST_CASE("transposed conv doubles 14 to 28 and gradients check out") {
    Rng rng(41);
    DTensor x = random_tensor<double>({1, 2, 14, 14}, rng);
    DTensor w = random_tensor<double>({2, 3, 2, 2}, rng);
    DTensor b = random_tensor<double>({3}, rng);
    DTensor y;
    kernels::conv_transpose2d_forward(x, w, &b, 2, y);
    CHECK(y.dim(2) == 28);
    CHECK(y.dim(3) == 28);

    Rng r2(43);
    const DTensor dy = random_tensor<double>(y.shape(), r2);
    auto loss = [&]() {
        DTensor out;
        kernels::conv_transpose2d_forward(x, w, &b, 2, out);
        double acc = 0;
        for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * dy[i];
        return acc;
    };
    DTensor dx(x.shape()), dw(w.shape()), db(b.shape());
    kernels::conv_transpose2d_backward(dy, x, w, 2, dx, dw, &db);
    CHECK(max_rel_err(dx, finite_diff(loss, x)) < 1e-6);
    CHECK(max_rel_err(dw, finite_diff(loss, w)) < 1e-6);
    CHECK(max_rel_err(db, finite_diff(loss, b)) < 1e-6);
}

TEST_CASE("batch norm: train-mode statistics, inference path, gradients") {
    Rng rng(47);
    const int n = 3, c = 4, s = 10;
    DTensor x = random_tensor<double>({n, c, s}, rng, 2.0);
    DTensor gamma = random_tensor<double>({c}, rng);
    DTensor beta = random_tensor<double>({c}, rng);
    DTensor y;
    kernels::BnCache<double> cache;
    std::vector<double> mean, var;
    kernels::bn_forward_train(x, n, c, s, gamma, beta, 1e-5, y, cache, &mean, &var);

    // Per-channel output statistics: (y - beta) / gamma has mean ~0.
    for (int ci = 0; ci < c; ++ci) {
        double m = 0;
        for (int ni = 0; ni < n; ++ni)
            for (int si = 0; si < s; ++si) m += (y[(ni * c + ci) * s + si] - beta[ci]) / gamma[ci];
        m /= n * s;
        CHECK(std::abs(m) < 1e-10);
    }

    Rng r2(53);
    const DTensor dy = random_tensor<double>({n, c, s}, r2);
    auto loss = [&]() {
        DTensor out;
        kernels::BnCache<double> cc;
        kernels::bn_forward_train(x, n, c, s, gamma, beta, 1e-5, out, cc);
        double acc = 0;
        for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * dy[i];
        return acc;
    };
    DTensor dx(x.shape()), dgamma({c}), dbeta({c});
    kernels::bn_backward(dy, cache, gamma, dx, dgamma, dbeta);
    CHECK(max_rel_err(dx, finite_diff(loss, x)) < 1e-5);
    CHECK(max_rel_err(dgamma, finite_diff(loss, gamma)) < 1e-5);
    CHECK(max_rel_err(dbeta, finite_diff(loss, beta)) < 1e-5);

    // Inference path reproduces the same transform from stored statistics.
    DTensor run_mean({c}), run_var({c});
    for (int ci = 0; ci < c; ++ci) {
        run_mean[ci] = mean[static_cast<size_t>(ci)];
        run_var[ci] = var[static_cast<size_t>(ci)];
    }
    DTensor y_infer;
    kernels::bn_forward_infer(x, n, c, s, gamma, beta, run_mean, run_var, 1e-5, y_infer);
    CHECK(max_rel_err(y_infer, y) < 1e-12);
}

TEST_CASE("relu6 clamps to [0,6] and routes gradients only inside") {
    Tensor x({7});
    const float vals[] = {-2.0f, 0.0f, 1.5f, 5.9f, 6.0f, 7.3f, 3.0f};
    for (int i = 0; i < 7; ++i) x[i] = vals[i];
    Tensor y;
    kernels::relu6_forward(x, y);
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        CHECK(y[i] >= 0.0f);
        CHECK(y[i] <= 6.0f);
    }
    CHECK(y[2] == 1.5f);
    CHECK(y[5] == 6.0f);
    Tensor dy({7});
    dy.fill(1.0f);
    Tensor dx(x.shape());
    kernels::relu6_backward(dy, x, dx);
    CHECK(dx[0] == 0.0f);  // below 0
    CHECK(dx[2] == 1.0f);  // interior
    CHECK(dx[5] == 0.0f);  // above 6
}

TEST_CASE("upsample2x/subsample2x shapes and gradients") {
    Rng rng(59);
    const Tensor x = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor up;
    kernels::upsample2x_forward(x, up);
    CHECK(up.dim(2) == 8);
    CHECK(up.at4(0, 1, 5, 5) == x.at4(0, 1, 2, 2));

    Tensor dup({1, 2, 8, 8});
    dup.fill(1.0f);
    Tensor dx(x.shape());
    kernels::upsample2x_backward(dup, x.shape(), dx);
    for (std::int64_t i = 0; i < dx.numel(); ++i) CHECK(dx[i] == 4.0f);

    Tensor sub;
    kernels::subsample2x_forward(up, sub);
    CHECK(sub.dim(2) == 4);
    CHECK(bitwise_equal(sub, x));
}

// --- ROIAlign ---------------------------------------------------------------

namespace {

// Scalar bilinear reference written directly from the sampling definition.
double roi_align_reference_bin(const DTensor& feat, int c, double x1, double y1, double x2,
                               double y2, double scale, int out_h, int out_w, int oy, int ox,
                               int ns) {
    const int h = feat.dim(1), w = feat.dim(2);
    const double x1s = x1 * scale, y1s = y1 * scale;
    double roi_w = x2 * scale - x1s, roi_h = y2 * scale - y1s;
    roi_w = std::max(roi_w, 1.0);
    roi_h = std::max(roi_h, 1.0);
    const double bin_w = roi_w / out_w, bin_h = roi_h / out_h;
    double acc = 0;
    for (int sy = 0; sy < ns; ++sy)
        for (int sx = 0; sx < ns; ++sx) {
            const double py = y1s + bin_h * (oy + (sy + 0.5) / ns);
            const double px = x1s + bin_w * (ox + (sx + 0.5) / ns);
            if (py < -1.0 || py > h || px < -1.0 || px > w) continue;
            double yy = std::max(py, 0.0), xx = std::max(px, 0.0);
            int yl = static_cast<int>(yy), xl = static_cast<int>(xx);
            int yh, xh;
            if (yl >= h - 1) { yl = yh = h - 1; yy = yl; } else yh = yl + 1;
            if (xl >= w - 1) { xl = xh = w - 1; xx = xl; } else xh = xl + 1;
            const double ly = yy - yl, lx = xx - xl;
            acc += (1 - ly) * (1 - lx) * feat.at3(c, yl, xl) + (1 - ly) * lx * feat.at3(c, yl, xh) +
                   ly * (1 - lx) * feat.at3(c, yh, xl) + ly * lx * feat.at3(c, yh, xh);
        }
    return acc / (ns * ns);
}

}  // namespace

TEST_CASE("roi_align: constant map, integer-aligned case, scalar oracle") {
    Rng rng(61);
    {
        DTensor feat({3, 10, 12});
        feat.fill(2.5);
        std::vector<std::array<double, 4>> rois = {{4.7, 3.1, 30.0, 25.5}};
        DTensor out;
        kernels::roi_align_forward(feat, rois, 0.25, 7, 7, 2, out);
        for (std::int64_t i = 0; i < out.numel(); ++i)
            CHECK(out[i] == doctest::Approx(2.5).epsilon(1e-12));
    }
    {
        // Whole-map box at scale 1, one sample per bin: pooled values equal
        // bilinear interpolation at the bin centers.
        DTensor feat = random_tensor<double>({1, 8, 8}, rng);
        std::vector<std::array<double, 4>> rois = {{0.0, 0.0, 8.0, 8.0}};
        DTensor out;
        kernels::roi_align_forward(feat, rois, 1.0, 8, 8, 1, out);
        for (int oy = 0; oy < 8; ++oy)
            for (int ox = 0; ox < 8; ++ox) {
                const double expected =
                    roi_align_reference_bin(feat, 0, 0, 0, 8, 8, 1.0, 8, 8, oy, ox, 1);
                CHECK(out.at4(0, 0, oy, ox) == doctest::Approx(expected).epsilon(1e-12));
            }
    }
    {
        // 200 random boxes vs the scalar reference. The relative-error gate
        // runs at float64 (the float32 instantiation of the same code path is
        // held to an absolute tolerance; its rounding noise near zero-valued
        // bins would otherwise dominate a relative measure).
        Rng r2(67);
        const Tensor featf = random_tensor<float>({2, 16, 16}, r2);
        const DTensor featd = featf.cast<double>();
        for (int trial = 0; trial < 200; ++trial) {
            const double x1 = r2.uniform(0.0, 50.0), y1 = r2.uniform(0.0, 50.0);
            const double x2 = x1 + r2.uniform(2.0, 40.0), y2 = y1 + r2.uniform(2.0, 40.0);
            std::vector<std::array<double, 4>> roid = {{x1, y1, x2, y2}};
            std::vector<std::array<float, 4>> roif = {
                {static_cast<float>(x1), static_cast<float>(y1), static_cast<float>(x2),
                 static_cast<float>(y2)}};
            DTensor out;
            kernels::roi_align_forward(featd, roid, 0.25, 7, 7, 2, out);
            Tensor outf;
            kernels::roi_align_forward(featf, roif, 0.25f, 7, 7, 2, outf);
            for (int c = 0; c < 2; ++c)
                for (int oy = 0; oy < 7; ++oy)
                    for (int ox = 0; ox < 7; ++ox) {
                        const double expected =
                            roi_align_reference_bin(featd, c, x1, y1, x2, y2, 0.25, 7, 7, oy, ox, 2);
                        CHECK(rel_err(out.at4(0, c, oy, ox), expected) < 1e-6);
                        CHECK(std::abs(outf.at4(0, c, oy, ox) - expected) < 1e-5);
                    }
        }
    }
}

TEST_CASE("roi_align gradients match finite differences at float64") {
    Rng rng(71);
    DTensor feat = random_tensor<double>({2, 12, 12}, rng);
    std::vector<std::array<double, 4>> rois = {{5.3, 7.1, 29.8, 33.3}, {1.2, 2.7, 17.9, 12.4}};
    DTensor out0;
    kernels::roi_align_forward(feat, rois, 0.25, 5, 5, 2, out0);
    Rng r2(73);
    const DTensor dy = random_tensor<double>(out0.shape(), r2);

    DTensor dfeat(feat.shape());
    std::vector<std::array<double, 4>> dboxes(rois.size(), {0, 0, 0, 0});
    kernels::roi_align_backward(dy, rois, 0.25, 5, 5, 2, feat, dfeat, &dboxes);

    auto loss = [&]() {
        DTensor out;
        kernels::roi_align_forward(feat, rois, 0.25, 5, 5, 2, out);
        double acc = 0;
        for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * dy[i];
        return acc;
    };
    CHECK(max_rel_err(dfeat, finite_diff(loss, feat)) < 1e-4);

    for (size_t r = 0; r < rois.size(); ++r)
        for (int k = 0; k < 4; ++k) {
            const double eps = 1e-5;
            const double saved = rois[r][static_cast<size_t>(k)];
            rois[r][static_cast<size_t>(k)] = saved + eps;
            const double up = loss();
            rois[r][static_cast<size_t>(k)] = saved - eps;
            const double down = loss();
            rois[r][static_cast<size_t>(k)] = saved;
            const double fd = (up - down) / (2 * eps);
            CHECK(rel_err(dboxes[r][static_cast<size_t>(k)], fd) < 1e-4);
        }
}

TEST_CASE("roi_align is continuous in box coordinates") {
    Rng rng(79);
    const DTensor feat = random_tensor<double>({1, 16, 16}, rng);
    const std::array<double, 4> base = {10.2, 8.8, 44.6, 40.1};
    DTensor out0;
    kernels::roi_align_forward(feat, {base}, 0.25, 7, 7, 2, out0);
    for (const double eps : {1e-3, 1e-4, 1e-5}) {
        std::array<double, 4> moved = base;
        moved[0] += eps;
        moved[2] += eps;
        DTensor out1;
        kernels::roi_align_forward(feat, {moved}, 0.25, 7, 7, 2, out1);
        double max_delta = 0;
        for (std::int64_t i = 0; i < out0.numel(); ++i)
            max_delta = std::max(max_delta, std::abs(out1[i] - out0[i]));
        CHECK(max_delta < 10.0 * eps);
    }
}
