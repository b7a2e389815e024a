#include <doctest.h>

#include <cmath>
#include <random>

#include "minnsa/kernels.hpp"
#include "test_helpers.hpp"

using namespace minnsa;

namespace {

ScoreVector sv(const Vec& scores, const std::vector<std::uint8_t>& mask) {
    return ScoreVector{scores, mask};
}

ScoreVector sv(const Vec& scores) { return ScoreVector{scores, {}}; }

// 2-D closed form: p1 = clamp((z1 - z2 + 1)/2, 0, 1).
double sparsemax2d(double z1, double z2) {
    return std::clamp((z1 - z2 + 1.0) / 2.0, 0.0, 1.0);
}

}  // namespace

TEST_CASE("sparsemax known values") {
    const Vec uniform = sparsemax(sv({1.0, 1.0, 1.0}));
    for (double w : uniform) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));

    const Vec p = sparsemax(sv({0.6, 0.4}));
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.4).epsilon(1e-12));

    const Vec q = sparsemax(sv({2.0, 0.0}));
    CHECK(q[0] == 1.0);
    CHECK(q[1] == 0.0);  // exact zero

    // shift invariance is exact for sparsemax
    const Vec r = sparsemax(sv({10.6, 10.4}));
    CHECK(r[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("sparsemax matches the 2-D closed form") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int t = 0; t < 2000; ++t) {
        const double z1 = u(rng), z2 = u(rng);
        const Vec p = sparsemax(sv({z1, z2}));
        CHECK(p[0] == doctest::Approx(sparsemax2d(z1, z2)).epsilon(1e-12));
        CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("sparsemax equals iterative simplex projection (independent oracle)") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<std::size_t> dim(1, 10);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        Vec z(dim(rng));
        for (double& v : z) v = g(rng);
        const Vec got = sparsemax(sv(z));
        const Vec want = testutil::project_simplex_pgd(z);
        for (std::size_t i = 0; i < z.size(); ++i) {
            CHECK(std::abs(got[i] - want[i]) < 1e-6);  // infinity norm
        }
    }
}

TEST_CASE("masked positions get exactly zero and absorb no mass") {
    const Vec scores{5.0, 1.0, 9.0, 1.0};
    const std::vector<std::uint8_t> mask{1, 1, 0, 1};
    for (const Vec& p : {sparsemax(sv(scores, mask)), softmax(sv(scores, mask))}) {
        CHECK(p[2] == 0.0);
        double sum = 0.0;
        for (double v : p) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    // the huge masked score must not influence the others
    const Vec p = sparsemax(sv(scores, mask));
    const Vec q = sparsemax(sv({5.0, 1.0, 1.0}));
    CHECK(p[0] == doctest::Approx(q[0]).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(q[1]).epsilon(1e-12));
    CHECK(p[3] == doctest::Approx(q[2]).epsilon(1e-12));
}

TEST_CASE("all-masked input is an error") {
    const Vec scores{1.0, 2.0};
    const std::vector<std::uint8_t> mask{0, 0};
    CHECK_THROWS_AS(sparsemax(sv(scores, mask)), Error);
    CHECK_THROWS_AS(softmax(sv(scores, mask)), Error);
}

TEST_CASE("softmax known values") {
    const Vec p = softmax(sv({0.0, 0.0}));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));

    const Vec q = softmax(sv({std::log(3.0), 0.0}));
    CHECK(q[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(0.25).epsilon(1e-12));

    // max-shift keeps huge scores finite (the tiny weight may underflow)
    const Vec r = softmax(sv({1000.0, 0.0}));
    CHECK(std::isfinite(r[0]));
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r[1] >= 0.0);
    CHECK(r[1] < 1e-300);
}

TEST_CASE("kernel simplex and order properties on random masked inputs") {
    std::mt19937_64 rng(37);
    std::uniform_int_distribution<std::size_t> dim(1, 12);
    std::normal_distribution<double> g(0.0, 3.0);
    std::bernoulli_distribution coin(0.75);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = dim(rng);
        Vec z(n);
        std::vector<std::uint8_t> mask(n, 0);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = g(rng);
            mask[i] = coin(rng) ? 1 : 0;
            any = any || mask[i];
        }
        if (!any) mask[0] = 1;

        for (bool sparse : {true, false}) {
            const Vec p = sparse ? sparsemax(sv(z, mask)) : softmax(sv(z, mask));
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(p[i] >= 0.0);
                if (!mask[i]) CHECK(p[i] == 0.0);
                sum += p[i];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            // monotonicity over unmasked pairs
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (mask[i] && mask[j] && z[i] >= z[j]) CHECK(p[i] >= p[j] - 1e-12);
                }
            }
        }
    }
}

TEST_CASE("permutation equivariance and shift invariance") {
    std::mt19937_64 rng(51);
    std::normal_distribution<double> g(0.0, 2.0);
    std::uniform_real_distribution<double> shift(-5.0, 5.0);
    for (int t = 0; t < 300; ++t) {
        Vec z(6);
        for (double& v : z) v = g(rng);

        std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
        std::shuffle(perm.begin(), perm.end(), rng);
        Vec zp(6);
        for (std::size_t i = 0; i < 6; ++i) zp[i] = z[perm[i]];

        const double c = shift(rng);
        Vec zs(6);
        for (std::size_t i = 0; i < 6; ++i) zs[i] = z[i] + c;

        for (bool sparse : {true, false}) {
            auto kern = [&](const Vec& v) { return sparse ? sparsemax(sv(v)) : softmax(sv(v)); };
            const Vec p = kern(z);
            const Vec pp = kern(zp);
            for (std::size_t i = 0; i < 6; ++i) {
                CHECK(pp[i] == doctest::Approx(p[perm[i]]).epsilon(1e-12));
            }
            const Vec ps = kern(zs);
            for (std::size_t i = 0; i < 6; ++i) {
                CHECK(ps[i] == doctest::Approx(p[i]).epsilon(sparse ? 1e-15 : 1e-12));
            }
        }
    }
}

TEST_CASE("sparsity contrast: sparsemax produces exact zeros, softmax never") {
    std::mt19937_64 rng(67);
    std::normal_distribution<double> g(0.0, 10.0);
    int sparse_with_zero = 0;
    for (int t = 0; t < 300; ++t) {
        Vec z(20);
        for (double& v : z) v = g(rng);
        const Vec p = sparsemax(sv(z));
        const Vec q = softmax(sv(z));
        bool any_zero = false;
        for (double v : p) any_zero = any_zero || v == 0.0;
        sparse_with_zero += any_zero ? 1 : 0;
        for (double v : q) CHECK(v > 0.0);
    }
    CHECK(sparse_with_zero >= 297);  // > 99%
}

TEST_CASE("sparsemax backward special cases") {
    // full support + constant upstream gradient -> zero
    const Vec z{0.1, 0.2, 0.15};
    const Vec g = sparsemax_backward(sv(z), Vec{3.0, 3.0, 3.0});
    for (double v : g) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));

    // singleton support is locally constant
    const Vec z2{5.0, 0.0, -1.0};
    REQUIRE(sparsemax(sv(z2))[0] == 1.0);
    const Vec g2 = sparsemax_backward(sv(z2), Vec{1.0, -2.0, 0.5});
    CHECK(g2 == Vec{0.0, 0.0, 0.0});
}

TEST_CASE("softmax backward special cases") {
    const Vec z{0.3, -0.4, 1.1};
    const Vec g = softmax_backward(sv(z), Vec{2.0, 2.0, 2.0});
    for (double v : g) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

    const Vec one{4.2};
    const Vec g1 = softmax_backward(sv(one), Vec{7.0});
    CHECK(g1[0] == doctest::Approx(0.0).epsilon(1e-15));
}

namespace {

// Central finite differences of a kernel along every coordinate.
template <typename Kernel>
Vec kernel_fd_grad(Kernel kern, const Vec& z, const Vec& out_grad, double step) {
    Vec g(z.size(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        Vec zp = z, zm = z;
        zp[i] += step;
        zm[i] -= step;
        const Vec pp = kern(zp);
        const Vec pm = kern(zm);
        double acc = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            acc += out_grad[j] * (pp[j] - pm[j]) / (2.0 * step);
        }
        g[i] = acc;
    }
    return g;
}

double max_rel_error(const Vec& got, const Vec& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double denom = std::max({std::abs(got[i]), std::abs(want[i]), 1e-8});
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("sparsemax backward matches finite differences away from support changes") {
    std::mt19937_64 rng(83);
    std::normal_distribution<double> g(0.0, 1.0);
    int tested = 0;
    while (tested < 100) {
        Vec z(5);
        for (double& v : z) v = g(rng);

        // skip points where a coordinate sits near the support boundary
        const Vec p = sparsemax(sv(z));
        double sum_support = 0.0;
        std::size_t support = 0;
        for (std::size_t i = 0; i < 5; ++i) {
            if (p[i] > 0.0) {
                sum_support += z[i];
                ++support;
            }
        }
        const double tau = (sum_support - 1.0) / static_cast<double>(support);
        bool degenerate = false;
        for (double v : z) degenerate = degenerate || std::abs(v - tau) < 1e-3;
        if (degenerate) continue;
        ++tested;

        Vec out_grad(5);
        for (double& v : out_grad) v = g(rng);
        const Vec analytic = sparsemax_backward(sv(z), out_grad);
        const Vec fd = kernel_fd_grad([](const Vec& v) { return sparsemax(ScoreVector{v, {}}); },
                                      z, out_grad, 1e-6);
        CHECK(max_rel_error(analytic, fd) < 1e-5);
    }
}

TEST_CASE("softmax backward matches finite differences") {
    std::mt19937_64 rng(97);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        Vec z(5), out_grad(5);
        for (double& v : z) v = g(rng);
        for (double& v : out_grad) v = g(rng);
        const Vec analytic = softmax_backward(sv(z), out_grad);
        const Vec fd = kernel_fd_grad([](const Vec& v) { return softmax(ScoreVector{v, {}}); },
                                      z, out_grad, 1e-6);
        CHECK(max_rel_error(analytic, fd) < 1e-6);
    }
}

TEST_CASE("backward returns zeros at masked positions") {
    const Vec z{1.0, 2.0, 3.0, 4.0};
    const std::vector<std::uint8_t> mask{1, 0, 1, 1};
    const Vec out_grad{0.5, 100.0, -0.25, 1.5};
    for (const Vec& g : {sparsemax_backward(sv(z, mask), out_grad),
                         softmax_backward(sv(z, mask), out_grad)}) {
        CHECK(g[1] == 0.0);
    }
}
