// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

#include "doctest.h"

#include "cepo/trainers/trainers.hpp"
#include "support/fixtures.hpp"

using namespace cepo;
using namespace cepo::trainers;
using ad::Tape;
using ad::Tensor;

namespace {

bool same_grads(const BatchGradient& a, const BatchGradient& b) { return a.grads == b.grads; }

/// Random log-prob rows [T, V].
Tensor random_rows(RngStream& rng, std::size_t T, std::size_t V, double spread = 2.0) {
    std::vector<double> v(T * V);
    for (std::size_t t = 0; t < T; ++t) {
        double mx = -1e300;
        for (std::size_t j = 0; j < V; ++j) mx = std::max(mx, v[t * V + j] = spread * rng.normal());
        double z = 0.0;
        for (std::size_t j = 0; j < V; ++j) z += std::exp(v[t * V + j] - mx);
        for (std::size_t j = 0; j < V; ++j) v[t * V + j] -= mx + std::log(z);
    }
    return Tensor::from({T, V}, std::move(v));
}

/// Linear softmax student: rows = log_softmax(X W), X [T, F] fixed.
struct LinearStudent {
    Tensor X, W;
    Tensor rows(Tape& t) const { return ad::log_softmax(t, ad::matmul(t, X, W)); }
};

LinearStudent linear_student(RngStream& rng, std::size_t T, std::size_t F, std::size_t V) {
    std::vector<double> x(T * F), w(F * V);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    for (double& v : w) v = rng.normal();
    return {Tensor::from({T, F}, x), Tensor::from({F, V}, w, true)};
}

/// −(1/T) Σ_t Σ_v c[t, v] ∇_W log P_S(v | t), with ∇_W log P_S(v | t) =
/// x_t ⊗ (e_v − p_t) written out by hand.
std::vector<double> weighted_score_sum(const LinearStudent& s, const std::vector<double>& c) {
    const std::size_t T = s.X.rows(), F = s.X.cols(), V = s.W.cols();
    std::vector<double> g(F * V, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> logits(V, 0.0);
        for (std::size_t v = 0; v < V; ++v)
            for (std::size_t f = 0; f < F; ++f) logits[v] += s.X.at(t * F + f) * s.W.at(f * V + v);
        double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        std::vector<double> p(V);
        for (std::size_t v = 0; v < V; ++v) p[v] = std::exp(logits[v] - mx) / z;
        for (std::size_t v = 0; v < V; ++v) {
            const double cv = c[t * V + v];
            for (std::size_t u = 0; u < V; ++u) {
                const double score = (u == v ? 1.0 : 0.0) - p[u];
                for (std::size_t f = 0; f < F; ++f) g[f * V + u] -= cv * s.X.at(t * F + f) * score / static_cast<double>(T);
            }
        }
    }
    return g;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

TrainerConfig config_for(Method m) {
    auto c = TrainerConfig::defaults_for(m);
    c.max_new = 12;
    return c;
}

} // namespace

TEST_CASE("clipped surrogate worked examples") {
    Tape tape;
    auto check = [&](double A, double rho, double expected) {
        const double old = -1.25;
        auto lp = Tensor::from({1}, {old + std::log(rho)}, true);
        auto obj = ppo_trajectory_objective(tape, lp, std::vector<double>{old}, Tensor::from({1}, {A}), 0.20, 0.28);
        CHECK(obj.item() == doctest::Approx(expected).epsilon(1e-12));
    };
    check(2.0, 1.5, 2.56);    // min(3.0, 1.28 · 2)
    check(2.0, 0.5, 1.0);     // below the band the unclipped term is smaller
    check(-2.0, 0.5, -1.6);   // min(-1.0, 0.8 · -2)
    check(-2.0, 1.5, -3.0);
    CHECK_THROWS_AS(ppo_trajectory_objective(tape, Tensor::from({2}, {0.0, 0.0}, true), std::vector<double>{0.0},
                                             Tensor::from({2}, {1.0, 1.0}), 0.2, 0.28),
                    std::invalid_argument);
    CHECK_THROWS_AS(ppo_trajectory_objective(tape, Tensor::from({1}, {0.0}, true), std::vector<double>{0.0},
                                             Tensor::from({1}, {1.0}, true), 0.2, 0.28),
                    std::invalid_argument);
}

TEST_CASE("on-policy surrogate equals minus the mean advantage") {
    auto params = testing::lively_params(testing::small_config(), 4);
    auto groups = testing::mixed_batch(params, 3, 5, 8);
    std::vector<CreditedTrajectory> batch;
    RngStream rng(3);
    double expected = 0.0;
    for (const auto& g : groups) {
        for (const auto& t : g.trajectories) {
            CreditedTrajectory c{g.problem.prompt, &t, {}};
            double s = 0.0;
            for (std::size_t i = 0; i < t.length(); ++i) s += c.advantages.emplace_back(rng.uniform(-2.0, 2.0));
            expected += s / static_cast<double>(t.length());
            batch.push_back(std::move(c));
        }
    }
    expected = -expected / static_cast<double>(batch.size());
    Tape tape;
    auto loss = ppo_surrogate_loss(tape, params, batch, 0.2, 0.28);
    CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-13));

    SUBCASE("zero advantages give a zero gradient") {
        for (auto& c : batch) std::fill(c.advantages.begin(), c.advantages.end(), 0.0);
        params.set_requires_grad(true);
        params.zero_grad();
        Tape t2;
        t2.backward(ppo_surrogate_loss(t2, params, batch, 0.2, 0.28));
        for (const auto& p : params.tensors())
            for (double g : p.grad()) CHECK(g == 0.0);
    }
    SUBCASE("missing old log-probs are rejected") {
        rollout::Trajectory bare = *batch[0].trajectory;
        bare.old_logprobs.clear();
        std::vector<CreditedTrajectory> bad{{batch[0].prompt, &bare, batch[0].advantages}};
        Tape t2;
        CHECK_THROWS_AS(ppo_surrogate_loss(t2, params, bad, 0.2, 0.28), std::invalid_argument);
    }
}

TEST_CASE("KL distillation loss and its vocabulary-wide gradient") {
    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = linear_student(rng, 4, 3, 6);
        auto teacher = random_rows(rng, 4, 6);
        s.W.zero_grad();
        Tape tape;
        auto loss = opsd_loss(tape, teacher, s.rows(tape));
        CHECK(loss.item() >= 0.0);
        tape.backward(loss);
        std::vector<double> pt(teacher.numel());
        for (std::size_t i = 0; i < pt.size(); ++i) pt[i] = std::exp(teacher.at(i));
        CHECK(max_abs_diff(s.W.grad(), weighted_score_sum(s, pt)) <= 1e-8);
    }
    SUBCASE("identical distributions") {
        auto s = linear_student(rng, 3, 3, 5);
        Tape probe(Tape::Mode::Inference);
        auto same = s.rows(probe);
        s.W.zero_grad();
        Tape tape;
        auto loss = opsd_loss(tape, same, s.rows(tape));
        CHECK(std::abs(loss.item()) <= 1e-15);
        tape.backward(loss);
        for (double g : s.W.grad()) CHECK(std::abs(g) <= 1e-15);
    }
}

TEST_CASE("Jensen-Shannon distillation loss") {
    RngStream rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        auto a = random_rows(rng, 3, 7, 3.0);
        auto b = random_rows(rng, 3, 7, 3.0);
        const double js = sdpo_loss(tape, a, b).item();
        CHECK(js >= -1e-15);
        CHECK(js <= std::numbers::ln2);
        CHECK(sdpo_loss(tape, a, a).item() == doctest::Approx(0.0).epsilon(1e-15));
    }
    // Two-point distributions on disjoint supports. exp(-1000) underflows to 0.
    const double h = std::log(0.5);
    auto p = Tensor::from({1, 4}, {h, h, -1000.0, -1000.0});
    auto q = Tensor::from({1, 4}, {-1000.0, -1000.0, h, h});
    Tape tape;
    CHECK(sdpo_loss(tape, p, q).item() == std::numbers::ln2);
    // The gradient with respect to the student rows is finite.
    auto qs = Tensor::from({1, 4}, {-1000.0, -1000.0, h, h}, true);
    Tape t2;
    t2.backward(sdpo_loss(t2, p, qs));
    for (double g : qs.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("contrastive KL negative control") {
    RngStream rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = linear_student(rng, 3, 4, 5);
        auto pos = random_rows(rng, 3, 5);
        auto neg = random_rows(rng, 3, 5);
        s.W.zero_grad();
        Tape tape;
        tape.backward(contrastive_kl_loss(tape, pos, neg, s.rows(tape)));
        std::vector<double> c(pos.numel());
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::exp(pos.at(i)) - std::exp(neg.at(i));
        CHECK(max_abs_diff(s.W.grad(), weighted_score_sum(s, c)) <= 1e-8);
    }
    SUBCASE("equal teachers cancel") {
        auto s = linear_student(rng, 3, 4, 5);
        auto pos = random_rows(rng, 3, 5);
        s.W.zero_grad();
        Tape tape;
        tape.backward(contrastive_kl_loss(tape, pos, pos, s.rows(tape)));
        for (double g : s.W.grad()) CHECK(g == 0.0);
    }
    SUBCASE("student as negative teacher reduces to the KL loss") {
        auto s = linear_student(rng, 3, 4, 5);
        auto pos = random_rows(rng, 3, 5);
        Tape probe(Tape::Mode::Inference);
        auto student_now = s.rows(probe);
        s.W.zero_grad();
        Tape t1;
        auto l1 = contrastive_kl_loss(t1, pos, student_now, s.rows(t1));
        t1.backward(l1);
        std::vector<double> g1(s.W.grad().begin(), s.W.grad().end());
        s.W.zero_grad();
        Tape t2;
        auto l2 = opsd_loss(t2, pos, s.rows(t2));
        t2.backward(l2);
        CHECK(l1.item() == doctest::Approx(l2.item()).epsilon(1e-14));
        CHECK(max_abs_diff(g1, s.W.grad()) <= 1e-14);
    }
}

TEST_CASE("AdamW update") {
    SUBCASE("zero gradient and zero decay leave parameters alone") {
        std::vector<Tensor> p{Tensor::from({3}, {0.5, -1.0, 2.0}, true)};
        p[0].zero_grad();
        AdamState s;
        optimizer_update(p, s, {0.1, 0.9, 0.999, 1e-8, 0.0});
        CHECK(p[0].at(0) == 0.5);
        CHECK(p[0].at(1) == -1.0);
        CHECK(p[0].at(2) == 2.0);
    }
    SUBCASE("one step on x^2 from 1") {
        std::vector<Tensor> p{Tensor::from({1}, {1.0}, true)};
        Tape tape;
        tape.backward(ad::sum(tape, ad::mul(tape, p[0], p[0])));
        AdamState s;
        optimizer_update(p, s, {0.1, 0.9, 0.999, 1e-8, 0.0});
        // m̂ = 2, v̂ = 4: x ← 1 − 0.1 · 2 / (2 + 1e-8).
        CHECK(p[0].at(0) == doctest::Approx(1.0 - 0.2 / (2.0 + 1e-8)).epsilon(1e-15));
        CHECK(std::abs(p[0].at(0)) < 1.0);
    }
    SUBCASE("weight decay alone shrinks by 1 - lr wd") {
        std::vector<Tensor> p{Tensor::from({2}, {3.0, -4.0}, true)};
        AdamState s;
        optimizer_update(p, s, {0.05, 0.9, 0.999, 1e-8, 0.1});
        CHECK(p[0].at(0) == 3.0 * (1.0 - 0.05 * 0.1));
        CHECK(p[0].at(1) == -4.0 * (1.0 - 0.05 * 0.1));
    }
    SUBCASE("non-finite gradients abort without touching anything") {
        std::vector<Tensor> p{Tensor::from({2}, {1.0, 2.0}, true)};
        p[0].zero_grad();
        p[0].mutable_grad()[1] = std::numeric_limits<double>::quiet_NaN();
        AdamState s;
        CHECK_THROWS_AS(optimizer_update(p, s, {}), std::domain_error);
        CHECK(s.t == 0);
        CHECK(p[0].at(0) == 1.0);
    }
}

TEST_CASE("learning-rate schedule") {
    auto c = TrainerConfig::defaults_for(Method::GRPO);
    CHECK(c.learning_rate == 2e-4);
    CHECK(TrainerConfig::defaults_for(Method::CEPO).learning_rate == 1e-3);
    CHECK(learning_rate_at(c, 0) == doctest::Approx(2e-4 / 5.0));
    CHECK(learning_rate_at(c, 4) == doctest::Approx(2e-4));
    CHECK(learning_rate_at(c, 5) == doctest::Approx(2e-4));
    CHECK(learning_rate_at(c, 50) == doctest::Approx(0.0).epsilon(1e-18));
    for (std::size_t s = 6; s < 50; ++s) CHECK(learning_rate_at(c, s) < learning_rate_at(c, s - 1));
    c.lr_schedule = LrSchedule::Constant;
    CHECK(learning_rate_at(c, 17) == 2e-4);
}

TEST_CASE("trainer config validation") {
    const auto pc = testing::small_config();
    auto c = config_for(Method::CEPO);
    CHECK_NOTHROW(c.validate(pc));
    auto bad = c;
    bad.ppo_clip_high = 1.0;
    CHECK_THROWS_AS(bad.validate(pc), std::invalid_argument);
    bad = c;
    bad.eps_w = 0.0;
    CHECK_THROWS_AS(bad.validate(pc), std::invalid_argument);
    bad = c;
    bad.max_new = pc.max_ref_len;
    CHECK_THROWS_AS(bad.validate(pc), std::invalid_argument);
    bad = c;
    bad.group_size = 1;
    CHECK_THROWS_AS(bad.validate(pc), std::invalid_argument);
    CHECK(parse_method("ContrastiveKL") == Method::ContrastiveKL);
    CHECK_THROWS(parse_method("PPO"));
}

TEST_CASE("method equivalences on fixed batches") {
    auto actor = testing::lively_params(testing::small_config(), 21);
    const TeacherParams tp{&actor, &actor};
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto groups = testing::mixed_batch(actor, 4, 5, 100 + seed);

        {
            // lambda = 0 makes CEPO a GRPO step.
            auto grpo = compute_batch_gradient(actor, tp, groups, config_for(Method::GRPO), 0.0);
            auto cepo = compute_batch_gradient(actor, tp, groups, config_for(Method::CEPO), 0.0);
            CHECK(same_grads(grpo, cepo));
            CHECK(grpo.loss == cepo.loss);
        }
        {
            // P_T- = P_S makes CEPO an RLSD step.
            GradientOptions force;
            force.force_negative_student = true;
            auto rlsd = compute_batch_gradient(actor, tp, groups, config_for(Method::RLSD), 0.5);
            auto cepo = compute_batch_gradient(actor, tp, groups, config_for(Method::CEPO), 0.5, force);
            CHECK(same_grads(rlsd, cepo));
            for (std::size_t g = 0; g < groups.size(); ++g)
                for (std::size_t i = 0; i < rlsd.credits[g].size(); ++i)
                    for (std::size_t t = 0; t < rlsd.credits[g][i].size(); ++t) {
                        CHECK(rlsd.credits[g][i][t].delta == cepo.credits[g][i][t].delta);
                        CHECK(rlsd.credits[g][i][t].modulated_advantage == cepo.credits[g][i][t].modulated_advantage);
                    }
        }
        {
            // Teacher passes leave no trace in RLSD and CEPO gradients.
            for (auto m : {Method::RLSD, Method::CEPO}) {
                auto plain = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5);
                GradientOptions taped;
                taped.teacher_on_tape = true;
                auto on_tape = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5, taped);
                std::vector<std::vector<std::vector<double>>> constants(groups.size());
                for (std::size_t g = 0; g < groups.size(); ++g)
                    for (const auto& traj : on_tape.credits[g]) {
                        auto& a = constants[g].emplace_back();
                        for (const auto& c : traj) a.push_back(c.modulated_advantage);
                    }
                GradientOptions oracle;
                oracle.advantage_override = &constants;
                auto detached = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5, oracle);
                CHECK(same_grads(plain, on_tape));
                CHECK(same_grads(on_tape, detached));
            }
        }
    }
}

TEST_CASE("only sampled-token teacher values reach evidence gradients") {
    auto actor = testing::lively_params(testing::small_config(), 22);
    const TeacherParams tp{&actor, &actor};
    const auto groups = testing::mixed_batch(actor, 3, 5, 300);
    // Move teacher mass between non-sampled tokens; sampled entries stay put.
    GradientOptions shuffle;
    shuffle.teacher_rows_hook = [](std::span<double> rows, std::size_t V, std::span<const TokenId> y) {
        for (std::size_t t = 0; t < y.size(); ++t) {
            auto row = rows.subspan(t * V, V);
            std::vector<std::size_t> others;
            for (std::size_t v = 0; v < V; ++v)
                if (static_cast<TokenId>(v) != y[t]) others.push_back(v);
            std::vector<double> lp;
            for (auto v : others) lp.push_back(row[v]);
            std::rotate(lp.begin(), lp.begin() + 1, lp.end());
            for (std::size_t k = 0; k < others.size(); ++k) row[others[k]] = lp[k];
        }
    };
    for (auto m : {Method::RLSD, Method::CEPO}) {
        auto plain = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5);
        auto moved = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5, shuffle);
        CHECK(same_grads(plain, moved));
    }
    for (auto m : {Method::OPSD, Method::SDPO, Method::ContrastiveKL}) {
        auto plain = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5);
        auto moved = compute_batch_gradient(actor, tp, groups, config_for(m), 0.5, shuffle);
        CHECK_FALSE(same_grads(plain, moved));
    }
}

TEST_CASE("train_step bookkeeping") {
    const auto pc = testing::small_config();
    auto init = testing::lively_params(pc, 23);
    const auto groups = testing::mixed_batch(init, 4, 5, 400);

    SUBCASE("GRPO has unit weights and no clipping") {
        auto cfg = config_for(Method::GRPO);
        auto st = StepState::init(cfg, init.clone());
        auto m = train_step(st, groups, cfg);
        CHECK(m.step == 1);
        CHECK(st.step == 1);
        CHECK(m.clip_rate == 0.0);
        CHECK(m.lambda == 0.0);
        CHECK(m.degenerate_group_fraction == 0.0);
        CHECK(m.train_accuracy == 1.0);
        CHECK_FALSE(policy::params_equal(st.params, init));
    }
    SUBCASE("CEPO fractions partition the tokens") {
        auto cfg = config_for(Method::CEPO);
        auto st = StepState::init(cfg, init.clone());
        auto m = train_step(st, groups, cfg);
        CHECK(m.lambda == 0.5);
        CHECK(m.pos_delta_fraction + m.neg_delta_fraction <= 1.0);
        CHECK(m.pos_delta_fraction > 0.0);
        CHECK(m.clip_rate >= 0.0);
        CHECK(m.clip_rate <= 1.0);
        // On-policy first epoch: the loss is minus the mean per-trajectory Â.
        auto again = compute_batch_gradient(init, {&init, &init}, groups, cfg, 0.5);
        double mean_adv = 0.0;
        std::size_t n = 0;
        for (const auto& g : again.credits)
            for (const auto& traj : g) {
                double s = 0.0;
                for (const auto& c : traj) s += c.modulated_advantage;
                mean_adv += s / static_cast<double>(traj.size());
                ++n;
            }
        CHECK(m.loss == doctest::Approx(-mean_adv / static_cast<double>(n)).epsilon(1e-13));
    }
    SUBCASE("degenerate batches do not move the policy") {
        auto cfg = config_for(Method::CEPO);
        auto st = StepState::init(cfg, init.clone());
        auto flat = groups;
        for (auto& g : flat) {
            for (auto& t : g.trajectories) t.reward = 0;
            rollout::finalize_group(g);
        }
        auto m = train_step(st, flat, cfg);
        CHECK(m.degenerate_group_fraction == 1.0);
        CHECK(m.loss == 0.0);
        CHECK(policy::params_equal(st.params, init));
    }
    SUBCASE("non-finite loss aborts with the offending group") {
        auto cfg = config_for(Method::GRPO);
        auto broken = init.clone();
        broken.head_b.mutable_values()[3] = std::numeric_limits<double>::quiet_NaN();
        auto st = StepState::init(cfg, std::move(broken));
        try {
            train_step(st, groups, cfg);
            FAIL("expected NonFiniteLoss");
        } catch (const NonFiniteLoss& e) {
            CHECK(e.diagnostic.find("\"problem_id\"") != std::string::npos);
        }
    }
    SUBCASE("SDPO moves the EMA teacher by 1 - beta") {
        auto cfg = config_for(Method::SDPO);
        cfg.ema_decay = 0.5;
        auto st = StepState::init(cfg, init.clone());
        REQUIRE(st.ema);
        train_step(st, groups, cfg);
        const double e = st.ema->head_b.at(0), p = st.params.head_b.at(0), p0 = init.head_b.at(0);
        CHECK(e == 0.5 * p0 + 0.5 * p);
    }
}

TEST_CASE("saved state resumes bit-identically") {
    const auto pc = testing::small_config();
    auto init = testing::lively_params(pc, 24);
    auto problems = synthmath::generate_dataset({40, 2, 10, 77});
    for (auto m : {Method::SDPO, Method::RLSD}) {
        auto cfg = config_for(m);
        cfg.batch_prompts = 3;
        cfg.group_size = 4;
        cfg.teacher_source = {policy::TeacherMode::PeriodicSync, 2};
        cfg.seed = 5;
        auto run = [&](StepState& st, std::size_t steps, std::vector<StepMetrics>& log) {
            for (std::size_t i = 0; i < steps; ++i) {
                auto batch = select_batch(problems, cfg.batch_prompts, cfg.seed, st.step);
                auto groups = rollout::sample_groups(st.params, batch, group_sampling(cfg), cfg.seed, st.step);
                log.push_back(train_step(st, groups, cfg));
            }
        };
        std::vector<StepMetrics> straight, resumed;
        auto a = StepState::init(cfg, init.clone());
        run(a, 3, straight);
        auto b = StepState::init(cfg, init.clone());
        run(b, 2, resumed);
        const auto dir = std::filesystem::temp_directory_path() / "cepo_trainers_test" / method_name(m);
        b.save(dir);
        auto c = StepState::load(dir);
        CHECK(c.step == 2);
        run(c, 1, resumed);
        CHECK(policy::params_equal(a.params, c.params));
        CHECK(a.moments.m == c.moments.m);
        CHECK(a.moments.v == c.moments.v);
        CHECK(straight.back().loss == resumed.back().loss);
        CHECK(straight.back().mean_reward == resumed.back().mean_reward);
        if (m == Method::SDPO) CHECK(policy::params_equal(*a.ema, *c.ema));
        CHECK(policy::params_equal(*a.teacher.snapshot(), *c.teacher.snapshot()));
    }
}

TEST_CASE("batch selection") {
    auto problems = synthmath::generate_dataset({50, 2, 10, 1});
    auto a = select_batch(problems, 20, 9, 3);
    auto b = select_batch(problems, 20, 9, 3);
    auto c = select_batch(problems, 20, 9, 4);
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        ids.push_back(a[i].id);
    }
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].id != c[i].id;
    CHECK(differs);
    CHECK_THROWS_AS(select_batch(problems, 51, 0, 0), std::invalid_argument);
}

TEST_CASE("supervised warm start") {
    const auto pc = testing::small_config();
    auto problems = synthmath::generate_dataset({30, 2, 10, 3});
    SUBCASE("zero steps leave parameters unchanged") {
        auto p = testing::lively_params(pc, 30);
        auto before = p.clone();
        WarmStartConfig wc;
        wc.steps = 0;
        wc.eval_problems = 5;
        policy::SamplingOptions so;
        so.max_new = 12;
        auto r = warm_start(p, problems, problems, wc, so);
        CHECK(r.steps_run == 0);
        CHECK(policy::params_equal(p, before));
    }
    SUBCASE("loss strictly decreases over ten steps on fixed data") {
        auto p = policy::PolicyParams::init(pc, 31);
        std::vector<SupervisedExample> batch;
        for (std::size_t i = 0; i < 8; ++i) batch.push_back(supervised_example(pc, problems[i], i % 2 == 0));
        CHECK(batch[0].prompt.size() > problems[0].prompt.size());
        AdamState adam;
        double prev = std::numeric_limits<double>::infinity();
        for (int s = 0; s < 10; ++s) {
            const double l = supervised_step(p, adam, batch, {3e-3, 0.9, 0.999, 1e-8, 0.0});
            CHECK(l < prev);
            prev = l;
        }
    }
}
