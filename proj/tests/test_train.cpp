#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "msnn/checkpoint.hpp"
#include "msnn/checksum.hpp"
#include "msnn/dataset.hpp"
#include "msnn/train.hpp"

namespace fs = std::filesystem;

namespace {

// 434-row manifest shaped like the paper's corpus: 249 cancerous, 185
// healthy. No files behind it; splitting never touches the disk.
msnn::Manifest paper_shaped_manifest() {
    msnn::Manifest m;
    m.root = "/nonexistent";
    for (int i = 0; i < 249; ++i)
        m.rows.push_back({"c" + std::to_string(i) + ".pgm", msnn::kCancerous, ""});
    for (int i = 0; i < 185; ++i)
        m.rows.push_back({"h" + std::to_string(i) + ".pgm", msnn::kNonCancerous, ""});
    return m;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / ("msnn_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST(Split, PaperCountsAtSeventyPercent) {
    auto m = paper_shaped_manifest();
    auto plan = msnn::split_dataset(m, 0.70, 5);
    // round-half-up(0.7*249)=174, round-half-up(0.7*185)=130
    ASSERT_EQ(plan.classes.size(), 2u);
    const auto& healthy = plan.classes[0]; // label 0
    const auto& cancer = plan.classes[1];  // label 1
    EXPECT_EQ(cancer.train.size(), 174u);
    EXPECT_EQ(healthy.train.size(), 130u);
    EXPECT_EQ(plan.train_indices().size(), 304u);
    EXPECT_EQ(plan.test_indices().size(), 130u);
}

TEST(Split, AllFourCanonicalFractions) {
    auto m = paper_shaped_manifest();
    struct Want {
        double fraction;
        std::size_t train, test;
    };
    // per-class round-half-up: .70 -> 174+130, .75 -> 187+139,
    // .80 -> 199+148, .85 -> 212+157
    const Want wants[] = {
        {0.70, 304, 130}, {0.75, 326, 108}, {0.80, 347, 87}, {0.85, 369, 65}};
    for (const auto& wnt : wants) {
        auto plan = msnn::split_dataset(m, wnt.fraction, 9);
        EXPECT_EQ(plan.train_indices().size(), wnt.train) << wnt.fraction;
        EXPECT_EQ(plan.test_indices().size(), wnt.test) << wnt.fraction;
    }
}

TEST(Split, PartitionInvariants) {
    auto m = paper_shaped_manifest();
    auto plan = msnn::split_dataset(m, 0.75, 17);
    auto train = plan.train_indices();
    auto test = plan.test_indices();
    std::vector<bool> seen(m.rows.size(), false);
    for (int i : train) {
        ASSERT_FALSE(seen[i]);
        seen[i] = true;
    }
    for (int i : test) {
        ASSERT_FALSE(seen[i]) << "index in both train and test";
        seen[i] = true;
    }
    for (bool s : seen) EXPECT_TRUE(s) << "index in neither set";
}

TEST(Split, ExactHalvesOnBalancedToySet) {
    msnn::Manifest m;
    for (int i = 0; i < 4; ++i) m.rows.push_back({"p.pgm", msnn::kCancerous, ""});
    for (int i = 0; i < 4; ++i) m.rows.push_back({"n.pgm", msnn::kNonCancerous, ""});
    auto plan = msnn::split_dataset(m, 0.5, 1);
    EXPECT_EQ(plan.classes[0].train.size(), 2u);
    EXPECT_EQ(plan.classes[1].train.size(), 2u);
}

TEST(Split, DeterministicPerSeed) {
    auto m = paper_shaped_manifest();
    auto a = msnn::split_dataset(m, 0.70, 5);
    auto b = msnn::split_dataset(m, 0.70, 5);
    auto c = msnn::split_dataset(m, 0.70, 6);
    EXPECT_EQ(a.train_indices(), b.train_indices());
    EXPECT_EQ(a.test_indices(), b.test_indices());
    EXPECT_NE(a.train_indices(), c.train_indices());
}

TEST(Split, RejectsBadInput) {
    auto m = paper_shaped_manifest();
    EXPECT_THROW(msnn::split_dataset(m, 0.0, 1), msnn::shape_error);
    EXPECT_THROW(msnn::split_dataset(m, 1.0, 1), msnn::shape_error);
    EXPECT_THROW(msnn::split_dataset(m, 1.5, 1), msnn::shape_error);
    msnn::Manifest tiny;
    tiny.rows.push_back({"a.pgm", msnn::kCancerous, ""});
    tiny.rows.push_back({"b.pgm", msnn::kNonCancerous, ""});
    tiny.rows.push_back({"c.pgm", msnn::kNonCancerous, ""});
    EXPECT_THROW(msnn::split_dataset(tiny, 0.7, 1), msnn::io_error); // one cancerous sample
}

TEST(Split, JsonRoundTrip) {
    TempDir dir("split_json");
    auto plan = msnn::split_dataset(paper_shaped_manifest(), 0.75, 23);
    plan.save(dir.file("plan.json"));
    auto loaded = msnn::SplitPlan::load(dir.file("plan.json"));
    EXPECT_EQ(loaded.seed, plan.seed);
    EXPECT_DOUBLE_EQ(loaded.fraction, plan.fraction);
    EXPECT_EQ(loaded.train_indices(), plan.train_indices());
    EXPECT_EQ(loaded.test_indices(), plan.test_indices());
    std::ofstream(dir.file("bad.json")) << "{ not json";
    EXPECT_THROW(msnn::SplitPlan::load(dir.file("bad.json")), msnn::io_error);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    std::vector<double> p = {1.0, -2.0, 0.5};
    std::vector<double> g(3, 0.0), m(3, 0.0), v(3, 0.0);
    msnn::adam_step(p, g, m, v, 1, msnn::AdamConfig{});
    EXPECT_DOUBLE_EQ(p[0], 1.0);
    EXPECT_DOUBLE_EQ(p[1], -2.0);
    EXPECT_DOUBLE_EQ(p[2], 0.5);
}

TEST(Adam, FirstStepHandValue) {
    // t=1, g=0.5: mhat=0.5, vhat=0.25, step = -lr * 0.5/(0.5+eps) ~ -1e-3
    std::vector<double> p = {0.0};
    std::vector<double> g = {0.5}, m = {0.0}, v = {0.0};
    msnn::AdamConfig cfg;
    msnn::adam_step(p, g, m, v, 1, cfg);
    EXPECT_NEAR(p[0], -1e-3 * (0.5 / (0.5 + cfg.epsilon)), 1e-15);
}

TEST(Adam, TwoStepsMatchHandUnrolledRecurrence) {
    const double g = 0.3, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> p = {1.0};
    std::vector<double> grad = {g}, m = {0.0}, v = {0.0};
    msnn::AdamConfig cfg{lr, b1, b2, eps};
    msnn::adam_step(p, grad, m, v, 1, cfg);
    msnn::adam_step(p, grad, m, v, 2, cfg);

    // hand-unrolled reference
    double hm = 0, hv = 0, hp = 1.0;
    for (int t = 1; t <= 2; ++t) {
        hm = b1 * hm + (1 - b1) * g;
        hv = b2 * hv + (1 - b2) * g * g;
        double mhat = hm / (1 - std::pow(b1, t));
        double vhat = hv / (1 - std::pow(b2, t));
        hp -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    EXPECT_NEAR(p[0], hp, 1e-12);
}

TEST(Adam, ShapeMismatchThrows) {
    std::vector<double> p = {1.0, 2.0};
    std::vector<double> g = {0.1}, m = {0.0, 0.0}, v = {0.0, 0.0};
    EXPECT_THROW(msnn::adam_step(p, g, m, v, 1, msnn::AdamConfig{}), msnn::shape_error);
}

TEST(TrainConfig, ValidatesPreconditions) {
    msnn::TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), msnn::shape_error);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), msnn::shape_error);
    cfg.batch_size = 1;
    cfg.split_fraction = 1.5;
    EXPECT_THROW(cfg.validate(), msnn::shape_error);
}

namespace {

// small synthetic corpus shared by the training-loop tests
struct Corpus {
    TempDir dir{"train_corpus"};
    msnn::Dataset data;
    msnn::SplitPlan plan;

    Corpus() {
        msnn::SyntheticParams params;
        params.count_pos = 12;
        params.count_neg = 12;
        params.extent = 32;
        params.seed = 77;
        auto synth = msnn::generate_synthetic(params, dir.path.string());
        data = msnn::load_dataset(synth.manifest);
        plan = msnn::split_dataset(synth.manifest, 0.75, 77);
    }
};

} // namespace

TEST(Train, CurveShapeAndEpochAccounting) {
    Corpus corpus;
    auto net = msnn::Network<float>::init(msnn::build_msnn(32), 5);
    msnn::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.seed = 5;
    cfg.val_every = 2;
    auto curves = msnn::train(net, corpus.data, corpus.plan, cfg);
    // 18 training rows, batch 8 -> 3 iterations per epoch (final short batch trained on)
    ASSERT_EQ(curves.points.size(), 9u);
    for (std::size_t i = 0; i < curves.points.size(); ++i) {
        EXPECT_EQ(curves.points[i].iteration, static_cast<long>(i + 1));
        EXPECT_EQ(curves.points[i].val_acc.has_value(), (i + 1) % 2 == 0);
    }
    EXPECT_EQ(net.epochs_completed, 3u);
}

TEST(Train, DeterministicCheckpointsAndCurves) {
    Corpus corpus;
    TempDir out("train_determinism");
    msnn::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.seed = 9;
    std::vector<std::uint64_t> ck_sums, curve_sums;
    for (int run = 0; run < 2; ++run) {
        auto net = msnn::Network<float>::init(msnn::build_msnn(32), cfg.seed);
        auto curves = msnn::train(net, corpus.data, corpus.plan, cfg);
        std::string ck = out.file("run" + std::to_string(run) + ".msnn");
        std::string cv = out.file("run" + std::to_string(run) + ".csv");
        msnn::save_checkpoint(net, ck);
        curves.save_csv(cv);
        ck_sums.push_back(msnn::checksum_file(ck));
        curve_sums.push_back(msnn::checksum_file(cv));
    }
    EXPECT_EQ(ck_sums[0], ck_sums[1]);
    EXPECT_EQ(curve_sums[0], curve_sums[1]);
}

TEST(Train, LossTrendsDownOnSeparableData) {
    Corpus corpus;
    auto net = msnn::Network<float>::init(msnn::build_msnn(32), 21);
    msnn::TrainConfig cfg;
    cfg.batch_size = 6;
    cfg.epochs = 6;
    cfg.seed = 21;
    auto curves = msnn::train(net, corpus.data, corpus.plan, cfg);
    double head = 0, tail = 0;
    for (int i = 0; i < 3; ++i) {
        head += curves.points[i].train_loss;
        tail += curves.points[curves.points.size() - 1 - i].train_loss;
    }
    EXPECT_LT(tail, head);
}

// Training loss, smoothed over a 10-iteration window, must not rise over the
// first epoch on separable data for >= 90% of seeds.
TEST(Train, FirstEpochSmoothedLossIsNonIncreasingAcrossSeeds) {
    TempDir dir("train_loss_trend");
    msnn::SyntheticParams params;
    params.count_pos = 100;
    params.count_neg = 100;
    params.extent = 32;
    params.seed = 3;
    auto synth = msnn::generate_synthetic(params, dir.path.string());
    auto data = msnn::load_dataset(synth.manifest);
    auto plan = msnn::split_dataset(synth.manifest, 0.75, 3);

    const int seeds = 10;
    const std::size_t window = 10;
    int good = 0;
    for (int seed = 1; seed <= seeds; ++seed) {
        auto net = msnn::Network<float>::init(msnn::build_msnn(32), seed);
        msnn::TrainConfig cfg;
        cfg.batch_size = 10; // 150 training rows -> 15 iterations in the epoch
        cfg.epochs = 1;
        cfg.seed = seed;
        auto curves = msnn::train(net, data, plan, cfg);
        ASSERT_GE(curves.points.size(), window + 1);
        auto smoothed = [&](std::size_t end) { // mean of the window ending at `end`
            double acc = 0;
            for (std::size_t i = end - window; i < end; ++i)
                acc += curves.points[i].train_loss;
            return acc / window;
        };
        if (smoothed(curves.points.size()) <= smoothed(window)) ++good;
    }
    EXPECT_GE(good, 9);
}

TEST(Train, NonFiniteParametersAbortWithDiagnostic) {
    Corpus corpus;
    auto net = msnn::Network<float>::init(msnn::build_msnn(32), 5);
    auto& conv = std::get<msnn::Conv2d<float>>(net.layers[0]);
    conv.b[0] = std::numeric_limits<float>::quiet_NaN();
    msnn::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 1;
    EXPECT_THROW(msnn::train(net, corpus.data, corpus.plan, cfg), msnn::numeric_error);
}

TEST(Train, MismatchedExtentIsRejected) {
    Corpus corpus; // extent-32 images
    auto net = msnn::Network<float>::init(msnn::build_msnn(64), 5);
    msnn::TrainConfig cfg;
    EXPECT_THROW(msnn::train(net, corpus.data, corpus.plan, cfg), msnn::shape_error);
}

TEST(EvaluateSplit, ReportsPredictionsAndScores) {
    Corpus corpus;
    auto net = msnn::Network<float>::init(msnn::build_msnn(32), 5);
    auto idx = corpus.plan.test_indices();
    auto out = msnn::evaluate_split(net, corpus.data, idx, msnn::LossKind::Mse, 8);
    ASSERT_EQ(out.predictions.size(), idx.size());
    ASSERT_EQ(out.scores.size(), idx.size());
    for (double s : out.scores) {
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
    EXPECT_GE(out.accuracy_pct, 0.0);
    EXPECT_LE(out.accuracy_pct, 100.0);
}
