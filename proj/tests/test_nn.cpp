#include <catch2/catch_amalgamated.hpp>

#include "softgrad/nn.hpp"
#include "softgrad/verify.hpp"

using namespace softgrad;

namespace {

Mlp scalar_net(double w, double b, Activation act) {
    Mlp net = make_mlp({1, 1}, {act});
    net.layers[0].weight(0, 0) = w;
    net.layers[0].bias[0] = b;
    return net;
}

}  // namespace

TEST_CASE("forward: affine identity layer", "[nn]") {
    const Mlp net = scalar_net(2.0, 1.0, Activation::Identity);
    REQUIRE(forward(net, {3.0}).output()[0] == 7.0);
}

TEST_CASE("forward: relu clamps negative preactivation", "[nn]") {
    const Mlp net = scalar_net(1.0, -5.0, Activation::Relu);
    REQUIRE(forward(net, {3.0}).output()[0] == 0.0);
}

TEST_CASE("forward: sigmoid of zero is one half", "[nn]") {
    const Mlp net = scalar_net(0.0, 0.0, Activation::Sigmoid);
    REQUIRE(forward(net, {4.2}).output()[0] == 0.5);
}

TEST_CASE("forward: input dim mismatch is a structural error", "[nn]") {
    const Mlp net = scalar_net(1.0, 0.0, Activation::Identity);
    REQUIRE_THROWS_AS(forward(net, {1.0, 2.0}), StructuralError);
}

TEST_CASE("backward: linear case by hand", "[nn]") {
    const Mlp net = scalar_net(2.0, 1.0, Activation::Identity);
    const Tape tape = forward(net, {3.0});
    const BackwardResult res = backward(net, tape, {1.0});
    REQUIRE(res.grad.layers[0].weight(0, 0) == 3.0);
    REQUIRE(res.grad.layers[0].bias[0] == 1.0);
    REQUIRE(res.input_cotangent[0] == 2.0);
}

TEST_CASE("backward: clamped relu has zero subgradient", "[nn]") {
    const Mlp net = scalar_net(1.0, -5.0, Activation::Relu);
    const Tape tape = forward(net, {3.0});
    const BackwardResult res = backward(net, tape, {1.0});
    REQUIRE(res.grad.layers[0].weight(0, 0) == 0.0);
    REQUIRE(res.grad.layers[0].bias[0] == 0.0);
    REQUIRE(res.input_cotangent[0] == 0.0);
}

TEST_CASE("backward: mismatched tape is a structural error", "[nn]") {
    const Mlp net = scalar_net(1.0, 0.0, Activation::Identity);
    Mlp other = make_mlp({2, 3, 1}, Activation::Relu, Activation::Identity);
    const Tape tape = forward(other, {1.0, 2.0});
    REQUIRE_THROWS_AS(backward(net, tape, {1.0}), StructuralError);
}

TEST_CASE("backward: two-layer net against a hand finite difference", "[nn]") {
    Rng rng(42);
    Mlp net = make_mlp({2, 3, 1}, Activation::Relu, Activation::Identity);
    init_mlp(net, rng);
    const Vector input{0.7, -0.4};
    const Tape tape = forward(net, input);
    const Vector analytic = flatten(backward(net, tape, {1.0}).grad);

    const double h = 1e-5;
    Vector flat = flatten(net);
    Mlp probe = net;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double saved = flat[i];
        flat[i] = saved + h;
        unflatten(probe, flat);
        const double up = forward(probe, input).output()[0];
        flat[i] = saved - h;
        unflatten(probe, flat);
        const double dn = forward(probe, input).output()[0];
        flat[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        REQUIRE(analytic[i] == Catch::Approx(fd).margin(1e-9).epsilon(1e-6));
    }
}

TEST_CASE("backward: randomized gradcheck suite passes", "[nn]") {
    const auto res = verify::check_network_gradcheck();
    INFO(res.detail);
    REQUIRE(res.pass);
}

TEST_CASE("flatten/unflatten round-trips bit-exactly", "[nn]") {
    Rng rng(7);
    Mlp net = make_mlp({3, 5, 2}, Activation::Relu, Activation::Sigmoid);
    init_mlp(net, rng);
    const Vector flat = flatten(net);
    Mlp copy = make_mlp({3, 5, 2}, Activation::Relu, Activation::Sigmoid);
    unflatten(copy, flat);
    REQUIRE(flatten(copy) == flat);
    REQUIRE_THROWS_AS(unflatten(copy, Vector(flat.size() + 1, 0.0)), StructuralError);
}

TEST_CASE("gradient and Adam moments mirror parameter shapes", "[nn]") {
    Mlp net = make_mlp({4, 6, 3}, Activation::Relu, Activation::Identity);
    const MlpGrad g = grad_like(net);
    REQUIRE(g.layers.size() == net.layers.size());
    for (std::size_t k = 0; k < g.layers.size(); ++k) {
        REQUIRE(g.layers[k].weight.same_shape(net.layers[k].weight));
        REQUIRE(g.layers[k].bias.size() == net.layers[k].bias.size());
        REQUIRE(net.adam_m.layers[k].weight.same_shape(net.layers[k].weight));
        REQUIRE(net.adam_v.layers[k].weight.same_shape(net.layers[k].weight));
    }
}

TEST_CASE("consecutive layer dimensions chain by construction", "[nn]") {
    REQUIRE_THROWS_AS(make_mlp({3, 4}, std::vector<Activation>{}), StructuralError);
    const Mlp net = make_mlp({3, 4, 2}, Activation::Relu, Activation::Identity);
    REQUIRE(net.layers[0].out_dim() == net.layers[1].in_dim());
}

TEST_CASE("batched forward/backward agree with the single-sample path", "[nn]") {
    Rng rng(99);
    Mlp net = make_mlp({3, 8, 2}, Activation::Relu, Activation::Sigmoid);
    init_mlp(net, rng);
    const std::size_t batch = 5;
    Matrix inputs(batch, 3);
    Matrix cots(batch, 2);
    for (auto& x : inputs.data) x = rng.normal();
    for (auto& x : cots.data) x = rng.normal();

    const BatchTape btape = forward_batch(net, inputs);
    const BatchBackwardResult bres = backward_batch(net, btape, cots);

    MlpGrad summed = grad_like(net);
    for (std::size_t b = 0; b < batch; ++b) {
        Vector in(3), cot(2);
        for (std::size_t c = 0; c < 3; ++c) in[c] = inputs(b, c);
        for (std::size_t c = 0; c < 2; ++c) cot[c] = cots(b, c);
        const Tape tape = forward(net, in);
        for (std::size_t c = 0; c < 2; ++c)
            REQUIRE(btape.output()(b, c) == Catch::Approx(tape.output()[c]).epsilon(1e-12));
        summed.add_scaled(backward(net, tape, cot).grad, 1.0);
    }
    const Vector a = flatten(bres.grad), b = flatten(summed);
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-12).epsilon(1e-10));
}
