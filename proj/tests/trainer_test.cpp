#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "kinet/nn/checkpoint.hpp"
#include "kinet/trainer.hpp"

namespace kinet {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

class TrainerTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root = fs::temp_directory_path() / ("kinet_trainer_" + std::to_string(::getpid()));
        fs::remove_all(root);
        std::vector<CatalogEntry> entries{*builtin_catalog().find("hinged_triangle"),
                                          *builtin_catalog().find("hinged_quadrilateral")};
        manifest = new Manifest(build_dataset(entries, AugmentationGrid::desk(), {}, 3, root / "data"));
    }
    static void TearDownTestSuite() {
        delete manifest;
        fs::remove_all(root);
    }

    TrainConfig config(const std::string& run, int epochs) const {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = 8;
        cfg.seed = 17;
        cfg.checkpoint_dir = root / run / "ckpt";
        cfg.metrics_path = root / run / "metrics.csv";
        cfg.record_timing = false;
        return cfg;
    }

    static inline fs::path root;
    static inline Manifest* manifest = nullptr;
};

TEST_F(TrainerTest, ProtocolAndDeterminism) {
    const TrainConfig a = config("a", 3);
    TrainState s = initial_state(nn::NetworkSpec{}, a);
    const auto records = train(s, *manifest, a);
    ASSERT_EQ(records.size(), 3u);
    for (int e = 1; e <= 3; ++e) {
        EXPECT_TRUE(fs::exists(checkpoint_path(a.checkpoint_dir, e)));
        EXPECT_TRUE(fs::exists(optimizer_path(checkpoint_path(a.checkpoint_dir, e))));
    }
    EXPECT_FALSE(fs::exists(checkpoint_path(a.checkpoint_dir, 4)));
    const auto back = read_metrics(a.metrics_path);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].epoch, static_cast<int>(i + 1));
        EXPECT_EQ(back[i].train_loss, records[i].train_loss);  // lossless text round trip
        EXPECT_EQ(back[i].val_acc, records[i].val_acc);
        EXPECT_GE(back[i].train_acc, 0.0);
        EXPECT_LE(back[i].train_acc, 1.0);
        EXPECT_GE(back[i].val_loss, -2 * 2e-7);
    }

    const TrainConfig b = config("b", 3);
    TrainState t = initial_state(nn::NetworkSpec{}, b);
    train(t, *manifest, b);
    EXPECT_EQ(slurp(a.metrics_path), slurp(b.metrics_path));
    EXPECT_EQ(slurp(checkpoint_path(a.checkpoint_dir, 3)), slurp(checkpoint_path(b.checkpoint_dir, 3)));

    // Resume from epoch 2 with the optimizer sidecar reproduces epoch 3.
    const TrainConfig c = config("c", 3);
    fs::create_directories(c.checkpoint_dir);
    fs::copy_file(a.metrics_path, c.metrics_path);
    {
        // keep only the header and the first two records
        auto lines = slurp(c.metrics_path);
        std::size_t cut = 0;
        for (int k = 0; k < 3; ++k) cut = lines.find('\n', cut) + 1;
        std::ofstream(c.metrics_path, std::ios::trunc) << lines.substr(0, cut);
    }
    bool exact = false;
    TrainState r = resume_state(checkpoint_path(a.checkpoint_dir, 2), c, &exact);
    EXPECT_TRUE(exact);
    EXPECT_EQ(r.epoch, 2);
    const auto resumed = train(r, *manifest, c);
    ASSERT_EQ(resumed.size(), 1u);
    EXPECT_EQ(resumed[0].epoch, 3);
    EXPECT_EQ(slurp(c.metrics_path), slurp(a.metrics_path));
    EXPECT_EQ(slurp(checkpoint_path(c.checkpoint_dir, 3)), slurp(checkpoint_path(a.checkpoint_dir, 3)));

    // Without the sidecar, resume still works but is flagged.
    fs::copy_file(checkpoint_path(a.checkpoint_dir, 1), root / "lonely.knck");
    resume_state(root / "lonely.knck", c, &exact);
    EXPECT_FALSE(exact);
}

TEST_F(TrainerTest, CallbackStopsEarly) {
    TrainConfig cfg = config("cb", 5);
    cfg.checkpoint_dir.clear();
    cfg.metrics_path.clear();
    TrainState s = initial_state(nn::NetworkSpec{}, cfg);
    int calls = 0;
    const auto records = train(s, *manifest, cfg, [&](const EpochRecord&, const nn::Model<float>&) {
        return ++calls < 2;
    });
    EXPECT_EQ(records.size(), 2u);
    EXPECT_EQ(s.epoch, 2);
}

TEST_F(TrainerTest, RejectsBadConfigAndCorruptCheckpoint) {
    TrainConfig cfg = config("bad", 0);
    TrainState s = initial_state(nn::NetworkSpec{}, config("bad", 1));
    EXPECT_THROW(train(s, *manifest, cfg), TrainingError);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    EXPECT_THROW(train(s, *manifest, cfg), TrainingError);
    std::ofstream(root / "corrupt.knck") << "KNCKgarbage";
    EXPECT_THROW(resume_state(root / "corrupt.knck", config("bad", 2)), nn::CheckpointError);
}

TEST_F(TrainerTest, EvaluateContract) {
    const nn::Model<float> model = nn::build_reference_model<float>(4);
    EXPECT_THROW(evaluate(model, *manifest, Split::Holdout), TrainingError);

    const EvalResult a = evaluate(model, *manifest, Split::Test);
    const EvalResult b = evaluate(model, *manifest, Split::Test, 3);
    ASSERT_EQ(a.predictions.size(), manifest->count(Split::Test));
    EXPECT_EQ(a.loss, b.loss);
    for (std::size_t i = 0; i < a.predictions.size(); ++i) {
        EXPECT_EQ(a.predictions[i].probability, b.predictions[i].probability);
        EXPECT_EQ(a.predictions[i].sample, b.predictions[i].sample);
    }

    nn::Model<float> dead = model;
    std::fill(dead.head.w.begin(), dead.head.w.end(), 0.0f);
    const EvalResult d = evaluate(dead, *manifest, Split::Test);
    std::size_t ones = 0;
    for (const auto& p : d.predictions) {
        EXPECT_EQ(p.probability, 0.5);
        EXPECT_EQ(p.predicted, 1);
        ones += p.sample->label == 1;
    }
    EXPECT_DOUBLE_EQ(d.accuracy, static_cast<double>(ones) / d.predictions.size());
}

}  // namespace
}  // namespace kinet
