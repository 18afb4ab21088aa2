#include <random>

#include "j3dai/error.hpp"
#include "j3dai/ir.hpp"

namespace j3dai::ir {

Graph build_tiny_cnn(int variant, std::uint64_t seed) {
    GraphBuilder b(seed);
    std::string x;
    switch (variant) {
    case 0:
        x = b.input("x", {1, 3, 12, 10});
        x = b.conv("c1", x, 12, 3, 1, 1);
        x = b.unary("c1_relu", LayerKind::ReLU, x);
        x = b.pool("mp", LayerKind::MaxPool, x, 2, 2, 0);
        x = b.conv("pw", x, 20, 1, 1, 0);
        x = b.global_avg_pool("gap", x);
        x = b.dense("fc", x, 10);
        break;
    case 1: {
        x = b.input("x", {1, 8, 9, 9});
        auto y = b.depthwise("dw", x, 3, 1, 1);
        y = b.unary("dw_relu6", LayerKind::ReLU6, y);
        y = b.conv("proj", y, 8, 1, 1, 0);
        x = b.add("res", x, y);
        x = b.pool("ap", LayerKind::AvgPool, x, 3, 2, 1);
        x = b.conv("head", x, 5, 3, 1, 0);
        break;
    }
    case 2: {
        x = b.input("x", {1, 5, 4, 6});
        auto up = b.upsample("up", x, 2);
        auto br = b.conv("br", up, 7, 3, 1, 1);
        x = b.concat("cat", {up, br});
        x = b.unary("cat_relu", LayerKind::ReLU, x);
        x = b.conv("mix", x, 9, 1, 1, 0);
        break;
    }
    case 3:
        x = b.input("x", {1, 40, 6, 6});
        x = b.conv("wide", x, 24, 1, 1, 0);
        x = b.unary("wide_relu", LayerKind::ReLU, x);
        x = b.conv("k5", x, 16, 5, 2, 2);
        x = b.pool("mp", LayerKind::MaxPool, x, 3, 1, 1);
        break;
    default: throw ValidationError("tiny CNN variant " + std::to_string(variant) + " does not exist");
    }
    b.output(x);
    auto g = b.finish();
    g.name = "tiny_cnn";
    return g;
}

Graph build_overlap_pair(std::uint64_t seed) {
    GraphBuilder b(seed);
    auto x = b.input("x", {1, 16, 16, 16});
    x = b.conv("first", x, 32, 3, 1, 1);
    b.output(b.conv("second", x, 64, 1, 1, 0));
    auto g = b.finish();
    g.name = "overlap_pair";
    return g;
}

Graph build_random_tiny(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
    GraphBuilder b(seed);
    int c = pick(1, 12), h = pick(3, 12), w = pick(3, 12);
    std::string x = b.input("x", {1, c, h, w});
    int n = pick(2, 6);
    auto out_extent = [](int e, int k, int s, int p) { return (e + 2 * p - k) / s + 1; };
    for (int i = 0; i < n; ++i) {
        std::string id = "l" + std::to_string(i);
        switch (pick(0, 9)) {
        case 0: {
            int k = pick(0, 1) ? 3 : 1;
            int s = h >= 4 && w >= 4 ? pick(1, 2) : 1;
            c = pick(1, 20);
            x = b.conv(id, x, c, k, s, k / 2);
            h = out_extent(h, k, s, k / 2);
            w = out_extent(w, k, s, k / 2);
            break;
        }
        case 1: {
            int s = h >= 4 && w >= 4 ? pick(1, 2) : 1;
            x = b.depthwise(id, x, 3, s, 1);
            h = out_extent(h, 3, s, 1);
            w = out_extent(w, 3, s, 1);
            break;
        }
        case 2: x = b.unary(id, LayerKind::ReLU, x); break;
        case 3: x = b.unary(id, LayerKind::ReLU6, x); break;
        case 4:
        case 5: {
            auto kind = pick(0, 1) ? LayerKind::MaxPool : LayerKind::AvgPool;
            if (h >= 2 && w >= 2 && pick(0, 1)) {
                x = b.pool(id, kind, x, 2, 2, 0);
                h /= 2;
                w /= 2;
            } else {
                x = b.pool(id, kind, x, 3, 1, 1);
            }
            break;
        }
        case 6: {
            auto y = b.conv(id + "_br", x, c, 1, 1, 0);
            x = b.add(id, x, y);
            break;
        }
        case 7:
            if (h <= 8 && w <= 8) {
                x = b.upsample(id, x, 2);
                h *= 2;
                w *= 2;
            } else {
                x = b.unary(id, LayerKind::ReLU, x);
            }
            break;
        case 8: {
            int c2 = pick(1, 10);
            auto y = b.conv(id + "_br", x, c2, 3, 1, 1);
            x = b.concat(id, {x, y});
            c += c2;
            break;
        }
        default:
            x = b.global_avg_pool(id, x);
            x = b.dense(id + "_fc", x, pick(1, 16));
            i = n;
            break;
        }
    }
    b.output(x);
    auto g = b.finish();
    g.name = "random_tiny";
    return g;
}

} // namespace j3dai::ir
