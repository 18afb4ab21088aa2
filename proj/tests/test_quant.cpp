#include <doctest.h>

#include <cmath>
#include <random>

#include "j3dai/error.hpp"
#include "j3dai/oracle.hpp"
#include "j3dai/quant.hpp"

using namespace j3dai;
using namespace j3dai::quant;
using ir::LayerKind;

namespace {

ir::Graph relu_net() {
    ir::GraphBuilder b(5);
    auto x = b.input("x", {1, 4, 6, 6});
    x = b.conv("c1", x, 8, 3, 1, 1, false);
    x = b.unary("r1", LayerKind::ReLU, x);
    x = b.conv("c2", x, 8, 1, 1, 0, false);
    x = b.unary("r2", LayerKind::ReLU, x);
    b.output(x);
    return b.finish();
}

} // namespace

TEST_CASE("parameter formulas") {
    auto w = weight_params(1.27);
    CHECK(w.scale == doctest::Approx(0.01));
    CHECK(w.zero_point == 0);
    CHECK(w.is_signed);

    auto a = activation_params(0.0, 2.55);
    CHECK(a.scale == doctest::Approx(0.01));
    CHECK(a.zero_point == 0);

    auto d = activation_params(0.0, 0.0);
    CHECK(d.scale == 1.0);
    CHECK(d.zero_point == 0);

    // zp = round(1.0 / (2.0/255)) = round(127.5) = 128 (half away from zero)
    CHECK(activation_params(-1.0, 1.0).zero_point == 128);
    // Range entirely above zero clamps the zero point at 0.
    CHECK(activation_params(1.0, 3.0).zero_point == 0);
    CHECK(activation_params(-3.0, -1.0).zero_point == 255);
}

TEST_CASE("requantize examples") {
    CHECK(requantize(100, 1ll << 30, 0, 0) == 100);
    CHECK(requantize(300, 1ll << 30, 0, 0) == 255);
    // 512 * 2^30 * 2^-(30+8) = 2 exactly
    CHECK(requantize(512, 1ll << 30, 8, 0) == 2);
    CHECK(requantize(-5, 1ll << 30, 0, 3) == 0);
    // 3 * 2^30 * 2^-31 = 1.5 rounds away from zero to 2, and -1.5 to -2
    CHECK(scale_acc(3, 1ll << 30, 1) == 2);
    CHECK(scale_acc(-3, 1ll << 30, 1) == -2);
    CHECK(requantize(-3, 1ll << 30, 1, 10) == 8);
}

TEST_CASE("property: derived multipliers are accurate and in range") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> expo(-20.0, 6.0);
    for (int i = 0; i < 2000; ++i) {
        double m = std::exp2(expo(rng));
        auto r = derive_requant(m);
        CHECK(r.m0 >= (1ll << 30));
        CHECK(r.m0 < (1ll << 31));
        CHECK(std::fabs(requant_value(r) - m) / m < std::ldexp(1.0, -24));
    }
    CHECK(derive_requant(1.0).m0 == (1ll << 30));
    CHECK(derive_requant(1.0).shift == 0);
    CHECK_THROWS_AS(derive_requant(0.0), QuantError);
    CHECK_THROWS_AS(derive_requant(-1.0), QuantError);
}

TEST_CASE("property: requantize is monotone in the accumulator") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        auto r = derive_requant(std::exp2(-static_cast<double>(rng() % 16)) * (1.0 + (rng() % 1000) / 1000.0));
        std::int32_t zp = static_cast<std::int32_t>(rng() % 256);
        std::uint8_t prev = 0;
        for (std::int64_t acc = -70000; acc <= 70000; acc += 37) {
            auto y = requantize(acc, r, zp);
            CHECK(y >= prev);
            prev = y;
        }
    }
}

TEST_CASE("property: quantize/dequantize error bounded by half a step") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int t = 0; t < 50; ++t) {
        double lo = std::min(0.0, u(rng)), hi = std::max(0.0, u(rng)) + 0.01;
        auto q = activation_params(lo, hi);
        // The representable interval after zero-point rounding.
        double rlo = dequantize_value(0, q), rhi = dequantize_value(255, q);
        for (int i = 0; i < 200; ++i) {
            double x = lo + (hi - lo) * (i / 199.0);
            double back = dequantize_value(quantize_value(x, q), q);
            if (x >= rlo && x <= rhi) CHECK(std::fabs(back - x) <= q.scale / 2 + 1e-9);
        }
        CHECK(quantize_value(rhi + 10.0, q) == 255);
        CHECK(quantize_value(rlo - 10.0, q) == 0);
    }
}

TEST_CASE("calibration statistics") {
    ir::Graph g = relu_net();
    ir::Tensor zero = ir::Tensor::zeros({1, 4, 6, 6}, ir::DType::Float32);
    auto s = calibrate(g, {zero});
    for (const auto& [name, st] : s) {
        CHECK(st.min == 0.0f);
        CHECK(st.max == 0.0f);
        CHECK(st.sample_count == 1);
    }

    auto samples = random_samples({1, 4, 6, 6}, 2, 4, -1.0f, 1.0f);
    auto one = calibrate(g, {samples[0]});
    auto v0 = oracle::run_float(g, samples[0]);
    for (const auto& [name, t] : v0) {
        const auto& d = t.as<float>();
        CHECK(one.at(name).min == *std::min_element(d.begin(), d.end()));
        CHECK(one.at(name).max == *std::max_element(d.begin(), d.end()));
    }

    // Envelope over the union, recomputed by brute force.
    auto both = calibrate(g, samples);
    auto v1 = oracle::run_float(g, samples[1]);
    for (const auto& [name, t] : v0) {
        std::vector<float> all = t.as<float>();
        const auto& d1 = v1.at(name).as<float>();
        all.insert(all.end(), d1.begin(), d1.end());
        CHECK(both.at(name).min == *std::min_element(all.begin(), all.end()));
        CHECK(both.at(name).max == *std::max_element(all.begin(), all.end()));
        CHECK(both.at(name).sample_count == 2);
    }
    CHECK_THROWS_AS(calibrate(g, {}), QuantError);
    CHECK_THROWS_AS(calibrate(g, {ir::Tensor::zeros({1, 4, 5, 6}, ir::DType::Float32)}), ShapeError);
}

TEST_CASE("weight quantization") {
    ir::Graph g = relu_net();
    auto& w = g.constants.at("c1.w").as<float>();
    std::fill(w.begin(), w.end(), 0.0f);
    auto samples = random_samples({1, 4, 6, 6}, 2, 4);
    ir::Graph q = quantize(g, samples);
    for (auto v : q.constants.at("c1.w").as<std::int8_t>()) CHECK(v == 0);
    CHECK(q.tensor("c1.w").dtype == ir::DType::Int8);
    CHECK(q.tensor("r2").dtype == ir::DType::UInt8);
    REQUIRE(q.tensor("c2").quant->requant.has_value());

    // Endpoints map to +-127; every element within half a step.
    const auto& src = g.constants.at("c2.w").as<float>();
    const auto& dst = q.constants.at("c2.w").as<std::int8_t>();
    double s = q.tensor("c2.w").quant->scale;
    auto mx = std::max_element(src.begin(), src.end(), [](float a, float b) { return std::fabs(a) < std::fabs(b); });
    CHECK(std::abs(dst[mx - src.begin()]) == 127);
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(std::fabs(dst[i] * s - src[i]) <= s / 2 + 1e-12);

    auto params = derive_quant_params(g, calibrate(g, samples));
    params.erase("c2.w");
    CHECK_THROWS_WITH_AS(quantize_graph(g, params), doctest::Contains("c2.w"), QuantError);
}

TEST_CASE("shape-only layers share their input parameters") {
    ir::Graph g = relu_net();
    auto p = derive_quant_params(g, calibrate(g, random_samples({1, 4, 6, 6}, 1, 2)));
    CHECK(p.at("r1").scale == p.at("c1").scale);
    CHECK(p.at("r1").zero_point == p.at("c1").zero_point);
    CHECK(!p.at("r1").requant);
    CHECK(p.at("c1.w").is_signed);
}
