#include "tmtb/io.hpp"
#include "tmtb/trainer.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

using namespace tmtb;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tmtb-trainer-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

ModelConfig tiny_model() {
    ModelConfig m;
    m.backbone.dim1 = 8;
    m.backbone.dim2 = 8;
    m.backbone.depth1 = 0;
    m.backbone.depth2 = 1;
    m.backbone.state_dim = 2;
    m.head_hidden = 4;
    return m;
}

TrainConfig tiny_config(const std::filesystem::path& out) {
    TrainConfig c;
    c.labeled_fraction = 0.25;
    c.labeled_per_batch = 2;
    c.unlabeled_per_batch = 2;
    c.crop = 64;
    c.model = tiny_model();
    c.optimizer.lr = 1e-3;
    c.epochs = 2;
    c.steps_per_epoch = 2;
    c.T_w = 10;
    c.eval_every = 0;
    c.seed = 11;
    c.out_dir = out.string();
    return c;
}

const Dataset& tiny_data() {
    static const Dataset d = synth_dataset({8, 64, 64, 3, 10, 5});
    return d;
}

template <typename M>
std::vector<Mat<typename M::Scalar>> snapshot(M& m) {
    std::vector<Mat<typename M::Scalar>> out;
    for (auto& p : nn::parameter_list(m)) out.push_back(*p.value);
    return out;
}

template <typename M>
bool bit_equal(M& a, M& b) {
    auto x = nn::parameter_list(a), y = nn::parameter_list(b);
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto& u = *x[i].value;
        const auto& v = *y[i].value;
        if (u.rows() != v.rows() || u.cols() != v.cols()) return false;
        if (std::memcmp(u.data(), v.data(), sizeof(float) * static_cast<std::size_t>(u.size())) != 0) return false;
    }
    return true;
}

std::vector<LabeledView> labeled_batch(const Trainer& t, std::uint64_t seed) {
    std::vector<LabeledView> out;
    Rng rng(seed);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& s = tiny_data().samples[i];
        const auto v = paired_crop(s.image, CropTargets{*s.points, {}, {}, {}}, 64, 64, 8, 0.0, rng);
        out.push_back({v.image, generate_density_map<float>(*v.targets.points, {})});
    }
    (void)t;
    return out;
}

std::vector<UnlabeledView> unlabeled_batch(std::size_t first, std::size_t n) {
    std::vector<UnlabeledView> out;
    for (std::size_t i = first; i < first + n; ++i) {
        const auto& img = tiny_data().samples[i].image;
        Rng rng(i);
        auto pair = make_pair(img, CropWindow{0, 0, img.height, img.width, false}, StrongAugmentConfig{}, rng);
        out.push_back({pair.weak, pair.strong.image});
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// EMA

TEST(Ema, TeacherOneStudentZero) {
    CountingModel<double> t(tiny_model()), s(tiny_model());
    t.visit([](const std::string&, Mat<double>& m, bool) { m.setOnes(); });
    s.visit([](const std::string&, Mat<double>& m, bool) { m.setZero(); });
    ema_update(t, s, 0.97);
    t.visit([](const std::string& name, Mat<double>& m, bool) {
        EXPECT_TRUE((m.array() == 0.97).all()) << name;
    });
}

TEST(Ema, FixedPoint) {
    CountingModel<double> t(tiny_model());
    auto s = t;
    const auto before = snapshot(t);
    ema_update(t, s, 0.97);
    const auto after = snapshot(t);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(Ema, GeometricClosedForm) {
    auto cfg = tiny_model();
    CountingModel<double> t(cfg);
    cfg.seed = 99;
    CountingModel<double> s(cfg);
    const auto t0 = snapshot(t), sv = snapshot(s);
    const int n = 37;
    for (int i = 0; i < n; ++i) ema_update(t, s, 0.97);
    const auto tn = snapshot(t);
    for (std::size_t i = 0; i < t0.size(); ++i) {
        const Mat<double> expected = sv[i] + std::pow(0.97, n) * (t0[i] - sv[i]);
        EXPECT_LE((tn[i] - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Ema, ShapeMismatchRejected) {
    auto other = tiny_model();
    other.head_hidden = 6;
    CountingModel<double> t(tiny_model()), s(other);
    EXPECT_THROW(ema_update(t, s, 0.97), ShapeError);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(config_from_json(R"({"epoch": 3})"), Error);
    EXPECT_THROW(config_from_json(R"({"optimizer": {"learning_rate": 0.1}})"), Error);
    EXPECT_NO_THROW(config_from_json(R"({"optimizer": {"lr": 0.1}})"));
}

TEST(Config, JsonRoundTrip) {
    auto c = tiny_config("/tmp/x");
    c.mode = TrainMode::supervised;
    c.inpaint.service.url = "http://localhost:9/inpaint";
    const auto text = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(text)), text);
}

TEST(Config, BatchCompositionDefaults) {
    EXPECT_EQ(default_batch_composition(0.05), std::make_pair(2, 6));
    EXPECT_EQ(default_batch_composition(0.10), std::make_pair(2, 6));
    EXPECT_EQ(default_batch_composition(0.40), std::make_pair(4, 4));
    const auto c = config_from_json(R"({"labeled_fraction": 0.4})");
    EXPECT_EQ(c.labeled_per_batch, 4);
    EXPECT_EQ(c.unlabeled_per_batch, 4);
}

TEST(Config, DigestIgnoresRunLengthAndLocation) {
    auto a = tiny_config("/tmp/a"), b = tiny_config("/tmp/b");
    b.epochs = 500;
    EXPECT_EQ(config_digest(a), config_digest(b));
    b.optimizer.lr *= 2;
    EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Config, InvariantsEnforced) {
    EXPECT_THROW(config_from_json(R"({"ema_decay": 1.0})"), Error);
    EXPECT_THROW(config_from_json(R"({"T_w": -1})"), Error);
    EXPECT_THROW(config_from_json(R"({"crop": 100})"), Error);
    EXPECT_EQ(config_from_json(R"({"T_w": 7})").loss.warmup_epochs, 7);
}

// ---------------------------------------------------------------------------
// Training

TEST(Trainer, TeacherOnlyMovesByEma) {
    const auto dir = scratch("teacher");
    Trainer tr(tiny_config(dir), tiny_data());

    std::set<const void*> student_ptrs;
    for (auto& p : nn::parameter_list(tr.student())) student_ptrs.insert(p.value);
    for (auto& p : nn::parameter_list(tr.teacher())) EXPECT_EQ(student_ptrs.count(p.value), 0u);

    Model old_teacher = tr.teacher();
    tr.train_step(labeled_batch(tr, 1), unlabeled_batch(4, 2), {}, 3);
    Model expected = old_teacher;
    ema_update(expected, tr.student(), 0.97);
    EXPECT_TRUE(bit_equal(expected, tr.teacher()));
    EXPECT_FALSE(bit_equal(old_teacher, tr.teacher()));
}

TEST(Trainer, TotalMatchesComponents) {
    const auto dir = scratch("total");
    Trainer tr(tiny_config(dir), tiny_data());
    const int epoch = 3;
    const auto sm = tr.train_step(labeled_batch(tr, 2), unlabeled_batch(4, 2), unlabeled_batch(6, 1), epoch);
    const double lambda = std::exp(-5.0 * std::pow(1.0 - epoch / 10.0, 2));
    EXPECT_NEAR(sm.lambda, lambda, 1e-15);
    const auto& c = sm.components;
    EXPECT_GT(c.unsup, 0.0);
    EXPECT_NEAR(sm.total, c.reg + c.cls + lambda * c.unsup + lambda * c.inpaint, 1e-12);
}

TEST(Trainer, EmptyInpaintStoreGivesZeroLoss) {
    const auto dir = scratch("empty");
    Trainer tr(tiny_config(dir), tiny_data());
    EXPECT_TRUE(tr.inpainted().empty());
    const auto sm = tr.train_step(labeled_batch(tr, 3), unlabeled_batch(4, 2), {}, 0);
    EXPECT_EQ(sm.components.inpaint, 0.0);
    EXPECT_EQ(sm.n_inpainted, 0u);
}

TEST(Trainer, NonFiniteLossAbortsStep) {
    const auto dir = scratch("nan");
    Trainer tr(tiny_config(dir), tiny_data());
    auto lab = labeled_batch(tr, 4);
    lab[0].density.values(0, 0) = std::numeric_limits<float>::quiet_NaN();
    Model before = tr.student();
    try {
        tr.train_step(lab, {}, {}, 0);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("supervised"), std::string::npos) << e.what();
    }
    EXPECT_TRUE(bit_equal(before, tr.student()));
    EXPECT_EQ(tr.global_step(), 0);
}

TEST(Trainer, RefreshSchedule) {
    const auto dir = scratch("schedule");
    auto cfg = tiny_config(dir);
    cfg.T_inp = 80;
    Trainer tr(cfg, tiny_data());
    EXPECT_TRUE(tr.inpaint_refresh(0));
    EXPECT_FALSE(tr.inpaint_refresh(40));
    EXPECT_TRUE(tr.inpaint_refresh(80));
    EXPECT_EQ(tr.inpainted().size(), 6u);
    for (const auto& r : tr.inpainted()) EXPECT_EQ(r.created_epoch, 80);

    auto sup = tiny_config(scratch("schedule-sup"));
    sup.mode = TrainMode::supervised;
    Trainer ts(sup, tiny_data());
    EXPECT_FALSE(ts.inpaint_refresh(0));
}

TEST(Trainer, RefreshIsDeterministic) {
    Trainer a(tiny_config(scratch("refresh-a")), tiny_data());
    Trainer b(tiny_config(scratch("refresh-b")), tiny_data());
    ASSERT_TRUE(a.inpaint_refresh(0));
    ASSERT_TRUE(b.inpaint_refresh(0));
    ASSERT_EQ(a.inpainted().size(), b.inpainted().size());
    for (std::size_t i = 0; i < a.inpainted().size(); ++i) {
        const auto& x = a.inpainted()[i];
        const auto& y = b.inpainted()[i];
        EXPECT_EQ(x.source_id, y.source_id);
        EXPECT_EQ(x.prompt_index, y.prompt_index);
        EXPECT_EQ(io::sha256_hex(io::encode_png(x.image)), io::sha256_hex(io::encode_png(y.image)));
        EXPECT_TRUE(x.mask == y.mask);
    }
}

TEST(Trainer, LoggedLambdaIsWarmupWeight) {
    const auto dir = scratch("lambda");
    auto cfg = tiny_config(dir);
    cfg.epochs = 3;
    cfg.steps_per_epoch = 1;
    cfg.T_w = 2;
    Trainer tr(cfg, tiny_data());
    tr.train(false);
    ASSERT_EQ(tr.history().size(), 3u);
    for (const auto& h : tr.history()) EXPECT_EQ(h.lambda, warmup_weight(h.epoch, 2));

    std::ifstream in(dir / "metrics.jsonl");
    std::string line;
    int e = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("epoch").get<int>(), e);
        EXPECT_EQ(j.at("lambda").get<double>(), warmup_weight(e, 2));
        EXPECT_EQ(j.at("omega").size(), 3u);
        ++e;
    }
    EXPECT_EQ(e, 3);
}

TEST(Trainer, TwoEpochRunIsBitReproducible) {
    Trainer a(tiny_config(scratch("repro-a")), tiny_data());
    Trainer b(tiny_config(scratch("repro-b")), tiny_data());
    a.train(false);
    b.train(false);
    EXPECT_TRUE(bit_equal(a.student(), b.student()));
    EXPECT_TRUE(bit_equal(a.teacher(), b.teacher()));
    ASSERT_EQ(a.history().size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.history()[i].to_json(), b.history()[i].to_json());
}

TEST(Trainer, CheckpointResumeReplaysNextEpoch) {
    const auto dir = scratch("ckpt");
    auto cfg = tiny_config(dir);
    Trainer a(cfg, tiny_data());
    a.run_epoch(false);
    const auto ckpt = dir / "checkpoint.bin";
    a.save_checkpoint(ckpt);

    Trainer b(cfg, tiny_data());
    b.load_checkpoint(ckpt);
    EXPECT_EQ(b.epoch(), 1);
    EXPECT_EQ(b.global_step(), a.global_step());
    EXPECT_TRUE(bit_equal(a.teacher(), b.teacher()));

    const auto ea = a.run_epoch(false);
    const auto eb = b.run_epoch(false);
    EXPECT_EQ(ea.to_json(), eb.to_json());
    EXPECT_TRUE(bit_equal(a.student(), b.student()));
    EXPECT_TRUE(bit_equal(a.teacher(), b.teacher()));

    // Evaluation of the restored teacher is identical too.
    const auto eng = ScanEngine::reference();
    const std::vector<Sample> val(tiny_data().samples.begin(), tiny_data().samples.begin() + 3);
    b.save_checkpoint(ckpt);
    const auto ra = evaluate(b.teacher(), val, eng), rb = evaluate(load_teacher(ckpt), val, eng);
    EXPECT_EQ(ra.predicted, rb.predicted);
    EXPECT_EQ(checkpoint_config(ckpt).epochs, cfg.epochs);
}

TEST(Trainer, CheckpointDigestMismatchRejected) {
    const auto dir = scratch("digest");
    auto cfg = tiny_config(dir);
    Trainer a(cfg, tiny_data());
    a.save_checkpoint(dir / "c.bin");
    cfg.optimizer.lr = 0.5;
    Trainer b(cfg, tiny_data());
    try {
        b.load_checkpoint(dir / "c.bin");
        FAIL() << "expected a digest error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("different configuration"), std::string::npos) << e.what();
    }
    io::write_file_atomic(dir / "junk.bin", std::string("not a checkpoint"));
    EXPECT_THROW(b.load_checkpoint(dir / "junk.bin"), Error);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, OracleCounterIsExact) {
    const auto r = evaluate(
        [](const Sample& s) { return generate_density_map<double>(*s.points, {}).values.sum(); }, tiny_data().samples);
    EXPECT_LE(r.mae, 1e-9);
    EXPECT_LE(r.rmse, 1e-9);
}

TEST(Evaluate, MetricsRecomputeFromCounts) {
    const auto eng = ScanEngine::reference();
    const Model m(tiny_model());
    const auto r = evaluate(m, tiny_data().samples, eng);
    double abs = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < r.predicted.size(); ++i) {
        const double d = r.predicted[i] - r.ground_truth[i];
        abs += std::abs(d);
        sq += d * d;
    }
    const double n = static_cast<double>(r.predicted.size());
    EXPECT_NEAR(r.mae, abs / n, 1e-12);
    EXPECT_NEAR(r.rmse, std::sqrt(sq / n), 1e-12);
    EXPECT_THROW(evaluate(m, {}, eng), Error);
}

TEST(Evaluate, PaddingIsCroppedAway) {
    const auto eng = ScanEngine::reference();
    const Model m(tiny_model());
    const auto& full = tiny_data().samples[0].image;
    const Index h = 60, w = 52;
    Image<float> img(3, h, w);
    for (Index y = 0; y < h; ++y) img.values.middleCols(y * w, w) = full.values.middleCols(y * full.width, w);

    const auto out = predict(m, img, eng);
    EXPECT_EQ(out.density.height(), 8);
    EXPECT_EQ(out.density.width(), 7);
    EXPECT_EQ(out.probs.height, 8);
    EXPECT_EQ(out.probs.width, 7);

    // Same computation done by hand: zero-pad to 64x56, predict, crop.
    Image<float> padded(3, 64, 56);
    for (Index y = 0; y < h; ++y) padded.values.middleCols(y * 56, w) = img.values.middleCols(y * w, w);
    const auto ref = m.forward(padded, eng);
    const double cropped = ref.density.values.topLeftCorner(8, 7).cast<double>().sum();
    EXPECT_NEAR(out.density.values.cast<double>().sum(), cropped, 1e-6);
}

TEST(Evaluate, LongSideIsCapped) {
    const auto eng = ScanEngine::reference();
    const Model m(tiny_model());
    const auto out = predict(m, tiny_data().samples[0].image, eng, 32);
    EXPECT_EQ(out.density.height(), 4);
    EXPECT_EQ(out.density.width(), 4);
}

TEST(Resize, IdentityAndConstant) {
    const auto& img = tiny_data().samples[1].image;
    const auto same = resize_bilinear(img, img.height, img.width);
    EXPECT_TRUE(same.values == img.values);
    Image<float> flat(3, 10, 10);
    flat.values.setConstant(0.25f);
    EXPECT_LE((resize_bilinear(flat, 7, 13).values.array() - 0.25f).abs().maxCoeff(), 1e-7f);
}
