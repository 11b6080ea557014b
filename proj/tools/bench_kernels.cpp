// Benchmark comparing the serial reference kernels against the OpenMP
// kernels on the shapes the pipeline actually runs: backbone convolutions,
// depthwise stacks, the box-head matmul, and ROIAlign.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "splicedet/core/parallel.hpp"
#include "splicedet/core/rng.hpp"
#include "splicedet/kernels/conv2d.hpp"
#include "splicedet/kernels/dense.hpp"
#include "splicedet/kernels/depthwise.hpp"
#include "splicedet/kernels/roi_align.hpp"

using namespace splicedet;
using core::Rng;
using core::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, 1.0));
    return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warmup
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-34s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(),
                serial_ms, parallel_ms, serial_ms / parallel_ms, equal ? "bitwise-equal" : "MISMATCH");
}

bool same(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

int main() {
    Rng rng(7);
    std::printf("threads available: %d\n\n", par::max_threads());

    {
        const Tensor x = random_tensor({1, 64, 64, 64}, rng);
        const Tensor w = random_tensor({64, 64, 3, 3}, rng);
        Tensor ys, yp;
        const double ts = time_ms([&] { kernels::serial::conv2d_forward(x, w, static_cast<const Tensor*>(nullptr), 1, 1, ys); }, 3);
        const double tp = time_ms([&] { kernels::par_impl::conv2d_forward(x, w, static_cast<const Tensor*>(nullptr), 1, 1, yp); }, 3);
        report("conv2d 3x3 64ch 64x64", ts, tp, same(ys, yp));
    }
    {
        const Tensor x = random_tensor({1, 256, 64, 64}, rng);
        const Tensor w = random_tensor({256, 3, 3}, rng);
        Tensor ys, yp;
        const double ts = time_ms([&] { kernels::serial::depthwise_forward(x, w, 1, 1, ys); }, 3);
        const double tp = time_ms([&] { kernels::par_impl::depthwise_forward(x, w, 1, 1, yp); }, 3);
        report("depthwise 3x3 256ch 64x64", ts, tp, same(ys, yp));
    }
    {
        const Tensor x = random_tensor({64, 3136}, rng);
        const Tensor w = random_tensor({3136, 1024}, rng);
        Tensor ys, yp;
        const double ts = time_ms([&] { kernels::serial::dense_forward(x, w, static_cast<const Tensor*>(nullptr), ys); }, 3);
        const double tp = time_ms([&] { kernels::par_impl::dense_forward(x, w, static_cast<const Tensor*>(nullptr), yp); }, 3);
        report("dense 64x3136 -> 1024", ts, tp, same(ys, yp));
    }
    {
        const Tensor feat = random_tensor({256, 128, 128}, rng);
        std::vector<std::array<float, 4>> rois;
        for (int i = 0; i < 128; ++i) {
            const float x1 = static_cast<float>(rng.uniform(0, 400));
            const float y1 = static_cast<float>(rng.uniform(0, 400));
            rois.push_back({x1, y1, x1 + static_cast<float>(rng.uniform(16, 100)),
                            y1 + static_cast<float>(rng.uniform(16, 100))});
        }
        Tensor ys, yp;
        const double ts =
            time_ms([&] { kernels::serial::roi_align_forward(feat, rois, 0.25f, 7, 7, 2, ys); }, 5);
        const double tp =
            time_ms([&] { kernels::par_impl::roi_align_forward(feat, rois, 0.25f, 7, 7, 2, yp); }, 5);
        report("roi_align 128 rois 7x7x256", ts, tp, same(ys, yp));
    }
    return 0;
}
