#include "lymphnet/tensor.hpp"

#include "doctest.h"
#include "lymphnet/errors.hpp"

using lymphnet::ShapeError;
using lymphnet::Tensor;
using lymphnet::shape_str;

TEST_CASE("shape constructor zero-fills") {
    Tensor<float> t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0f);
}

TEST_CASE("data constructor checks length") {
    CHECK_NOTHROW(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1, 2, 3, 4, 5}), ShapeError);
}

TEST_CASE("zero extents are rejected") {
    CHECK_THROWS_AS(Tensor<float>({3, 0, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>({0}), ShapeError);
}

TEST_CASE("multi-index access is row-major") {
    Tensor<int> t({2, 3, 4});
    int v = 0;
    for (auto& x : t) x = v++;
    CHECK(t.at(0, 0, 0) == 0);
    CHECK(t.at(0, 0, 3) == 3);
    CHECK(t.at(0, 1, 0) == 4);
    CHECK(t.at(1, 0, 0) == 12);
    CHECK(t.at(1, 2, 3) == 23);

    Tensor<int> m({3, 5});
    m.at(2, 4) = 7;
    CHECK(m[2 * 5 + 4] == 7);

    Tensor<int> q({2, 2, 2, 2});
    q.at(1, 1, 1, 1) = 9;
    CHECK(q[15] == 9);
}

TEST_CASE("full and fill") {
    auto t = Tensor<float>::full({4}, 2.5f);
    for (std::size_t i = 0; i < 4; ++i) CHECK(t[i] == 2.5f);
    t.fill(-1.0f);
    for (std::size_t i = 0; i < 4; ++i) CHECK(t[i] == -1.0f);
}

TEST_CASE("same_shape compares extents, not contents") {
    Tensor<float> a({2, 3}), b({2, 3}), c({3, 2});
    a.fill(1.0f);
    CHECK(a.same_shape(b));
    CHECK(!a.same_shape(c));
}

TEST_CASE("shape_str formatting") {
    CHECK(shape_str({1, 40, 40}) == "[1x40x40]");
    CHECK(shape_str({7}) == "[7]");
    CHECK(shape_str({}) == "[]");
}
