#include "tmtb/inpainting.hpp"
#include "tmtb/io.hpp"
#include "tmtb/synth.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

using namespace tmtb;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tmtb-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Synthetic scenes have a 64x64 minimum; smaller test images are crops.
Image<float> scene(std::uint64_t seed, Index h = 48, Index w = 64) {
    const auto full = synth_scene(seed, 6, std::max<Index>(h, 64), std::max<Index>(w, 64), BackgroundStyle::clutter).image;
    Image<float> out(3, h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) out.values.col(y * w + x) = full.values.col(y * full.width + x);
    return out;
}

Raster<float> random_mask(Index h, Index w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(0.4);
    Raster<float> m(h, w);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = b(rng) ? 1.0f : 0.0f;
    return m;
}

bool bit_equal(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void expect_unmasked_identical(const Image<float>& src, const Image<float>& out, const Raster<float>& mask) {
    ASSERT_EQ(out.height, src.height);
    ASSERT_EQ(out.width, src.width);
    for (Index p = 0; p < src.cells(); ++p) {
        if (mask.data()[p] > 0.5f) continue;
        for (Index c = 0; c < 3; ++c) ASSERT_TRUE(bit_equal(src.values(c, p), out.values(c, p))) << "pixel " << p;
    }
}

/// Minimal stand-in for the inpainting service. Replies with a constant image
/// of the requested size, or with whatever `mode` asks for.
class StubService {
public:
    std::string mode = "ok";
    std::atomic<int> hits{0};
    nlohmann::json last_request;

    StubService() {
        server_.Post("/inpaint", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_request = nlohmann::json::parse(req.body);
            if (mode == "500") {
                res.status = 500;
                return;
            }
            if (mode == "400") {
                res.status = 400;
                return;
            }
            if (mode == "garbage") {
                res.set_content("{\"image\": \"not base64!\"}", "application/json");
                return;
            }
            const auto src = io::decode_png(io::base64_decode(last_request.at("image").get<std::string>()));
            const Index h = mode == "wrong-size" ? src.height + 1 : src.height;
            Image<float> out(3, h, src.width);
            out.values.setConstant(200.0f / 255.0f);
            res.set_content(nlohmann::json{{"image", io::base64_encode(io::encode_png(out))}}.dump(),
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubService() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/inpaint"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

// ---------------------------------------------------------------------------
// io

TEST(Png, QuantisedImageRoundTripsExactly) {
    const auto img = scene(3);
    const auto back = io::decode_png(io::encode_png(img));
    ASSERT_EQ(back.height, img.height);
    ASSERT_EQ(back.width, img.width);
    for (Index i = 0; i < img.values.size(); ++i) ASSERT_TRUE(bit_equal(img.values.data()[i], back.values.data()[i]));
}

TEST(Png, ValuesAreClampedAndRounded) {
    Image<float> img(3, 1, 2);
    img(0, 0, 0) = -0.3f;
    img(1, 0, 0) = 1.7f;
    img(2, 0, 0) = 0.5f;  // 127.5 rounds away from zero
    const auto back = io::decode_png(io::encode_png(img));
    EXPECT_EQ(back(0, 0, 0), 0.0f);
    EXPECT_EQ(back(1, 0, 0), 1.0f);
    EXPECT_EQ(back(2, 0, 0), 128.0f / 255.0f);
}

TEST(Png, FileRoundTripAndGarbageRejected) {
    const auto dir = scratch("png");
    const auto img = scene(4, 16, 24);
    io::write_png(dir / "a.png", img);
    EXPECT_TRUE(io::read_png(dir / "a.png").values == img.values);
    EXPECT_THROW(io::decode_png({1, 2, 3, 4}), Error);
    EXPECT_THROW(io::read_png(dir / "missing.png"), Error);
}

TEST(Png, MaskRoundTrip) {
    const auto m = random_mask(13, 17, 5);
    EXPECT_TRUE(io::decode_mask_png(io::encode_mask_png(m)) == m);
}

TEST(Dmap, RoundTripIsBitExact) {
    const auto dir = scratch("dmap");
    DensityMap<float> dm(5, 7, 8);
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> u(0, 1);
    for (Index i = 0; i < dm.values.size(); ++i) dm.values.data()[i] = u(rng) * 1e-3f;
    io::write_dmap(dir / "d.dmap", dm);
    const auto back = io::read_dmap(dir / "d.dmap");
    EXPECT_EQ(back.stride, 8);
    EXPECT_TRUE(back.values == dm.values);
}

TEST(Dmap, RejectsTruncatedAndForeignFiles) {
    const auto dir = scratch("dmap-bad");
    io::write_file_atomic(dir / "x.dmap", std::string_view("NOPE0000000000000000"));
    EXPECT_THROW(io::read_dmap(dir / "x.dmap"), Error);
    io::write_dmap(dir / "y.dmap", DensityMap<float>(3, 3, 1));
    auto bytes = io::read_file(dir / "y.dmap");
    bytes.pop_back();
    io::write_file_atomic(dir / "y.dmap", bytes);
    EXPECT_THROW(io::read_dmap(dir / "y.dmap"), Error);
}

TEST(Base64, KnownVectorsAndRoundTrip) {
    auto enc = [](std::string s) { return io::base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
    EXPECT_EQ(enc(""), "");
    EXPECT_EQ(enc("f"), "Zg==");
    EXPECT_EQ(enc("fo"), "Zm8=");
    EXPECT_EQ(enc("foo"), "Zm9v");
    EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
    for (std::size_t n = 0; n < 10; ++n) {
        std::vector<std::uint8_t> b(n);
        for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(37 * i + 250);
        EXPECT_EQ(io::base64_decode(io::base64_encode(b)), b) << n;
    }
    EXPECT_THROW(io::base64_decode("abc"), Error);
}

TEST(Sha256, KnownVector) {
    EXPECT_EQ(io::sha256_hex(std::string_view("abc")),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

// ---------------------------------------------------------------------------
// prompts

TEST(Prompts, TableAndSampling) {
    const auto store = PromptStore::standard();
    ASSERT_EQ(store.positives.size(), 20u);
    EXPECT_EQ(store.negative, "disfigured face, broken limbs, deformed body parts");
    EXPECT_EQ(store.positives.front(), "sunset over mountains, a lone eagle soaring, vibrant colors");
    std::set<std::size_t> seen;
    for (std::uint64_t s = 0; s < 400; ++s) {
        const auto c = sample_prompt(store, s);
        ASSERT_LT(c.index, 20u);
        EXPECT_EQ(c.positive, store.positives[c.index]);
        EXPECT_EQ(c.negative, store.negative);
        seen.insert(c.index);
    }
    EXPECT_EQ(seen.size(), 20u);
    EXPECT_EQ(sample_prompt(store, 9).index, sample_prompt(store, 9).index);
    EXPECT_THROW(sample_prompt(PromptStore{}, 0), Error);
}

// ---------------------------------------------------------------------------
// masks and weights

TEST(InpaintMask, ZeroBinCellsAreReplicatedOverTheirBlock) {
    BinProbMap<float> p(3, 2, 2, 4);
    // cells: (0,0) bin 0, (0,1) bin 2, (1,0) bin 1, (1,1) bin 0
    p.values.col(0) << 0.8f, 0.1f, 0.1f;
    p.values.col(1) << 0.1f, 0.2f, 0.7f;
    p.values.col(2) << 0.3f, 0.6f, 0.1f;
    p.values.col(3) << 0.5f, 0.5f, 0.0f;  // tie -> bin 0
    const auto m = build_inpaint_mask(p, 8, 8);
    for (Index y = 0; y < 8; ++y)
        for (Index x = 0; x < 8; ++x) {
            const bool zero = (y < 4 && x < 4) || (y >= 4 && x >= 4);
            EXPECT_EQ(m(y, x), zero ? 1.0f : 0.0f) << y << "," << x;
        }
    // Pixels past the last full cell take the nearest cell.
    const auto wide = build_inpaint_mask(p, 10, 10);
    EXPECT_EQ(wide(9, 9), 1.0f);
    EXPECT_EQ(wide(9, 0), 0.0f);
}

TEST(Levels, AbsoluteArgmaxDifference) {
    BinProbMap<double> s(6, 1, 3, 8), w(6, 1, 3, 8);
    s.values(0, 0) = 1;  // 0 vs 0
    w.values(0, 0) = 1;
    s.values(5, 1) = 1;  // 5 vs 2
    w.values(2, 1) = 1;
    s.values(1, 2) = 1;  // 1 vs 4
    w.values(4, 2) = 1;
    const auto l = inconsistency_levels(s, w);
    EXPECT_EQ(l(0, 0), 0);
    EXPECT_EQ(l(0, 1), 3);
    EXPECT_EQ(l(0, 2), 3);
    EXPECT_THROW(inconsistency_levels(s, BinProbMap<double>(6, 1, 2, 8)), ShapeError);
}

TEST(LevelWeights, Values) {
    const auto w0 = level_weights(0, 2, 100);
    for (double v : w0) EXPECT_EQ(v, 1.0 / 3.0);
    const auto w = level_weights(100, 2, 100);
    EXPECT_NEAR(w[0], 0.5121, 1e-4);
    EXPECT_NEAR(w[1], 0.2722, 1e-4);
    EXPECT_NEAR(w[2], 0.2157, 1e-4);
    // Direct formula.
    for (double t : {3.0, 57.0, 811.0}) {
        const auto v = level_weights(t, 3, 40);
        double z = 0;
        for (int l = 0; l <= 3; ++l) z += std::exp(std::exp(-l * t / 40));
        for (int l = 0; l <= 3; ++l) EXPECT_NEAR(v[l], std::exp(std::exp(-l * t / 40)) / z, 1e-14);
    }
    EXPECT_EQ(level_weights(5, 0, 10), std::vector<double>{1.0});
    EXPECT_THROW(level_weights(-1, 2, 10), Error);
    EXPECT_THROW(level_weights(1, 2, 0), Error);
}

TEST(LevelWeights, MonotoneAndNormalised) {
    double prev = 0;
    for (int t = 0; t <= 2000; ++t) {
        const auto w = level_weights(t, 2, 100);
        EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
        EXPECT_GE(w[0], prev);
        prev = w[0];
    }
}

TEST(WeightedMask, LevelsAboveLGetZero) {
    IndexRaster l(1, 5);
    l << 0, 1, 2, 3, 5;
    const auto m = weighted_mask<double>(l, 100, 2, 100);
    const auto w = level_weights(100, 2, 100);
    EXPECT_EQ(m(0, 0), w[0]);
    EXPECT_EQ(m(0, 1), w[1]);
    EXPECT_EQ(m(0, 2), w[2]);
    EXPECT_EQ(m(0, 3), 0.0);
    EXPECT_EQ(m(0, 4), 0.0);
    IndexRaster bad(1, 1);
    bad << -1;
    EXPECT_THROW(weighted_mask(bad, 0, 2, 10), Error);
}

// ---------------------------------------------------------------------------
// backends

TEST(Mock, DeterministicQuantisedAndPromptDependent) {
    const MockInpainter mock;
    const auto img = scene(1);
    const auto mask = random_mask(img.height, img.width, 2);
    const auto store = PromptStore::standard();
    const auto a = mock.generate(img, mask, sample_prompt(store, 1), 42);
    const auto b = mock.generate(img, mask, sample_prompt(store, 1), 42);
    EXPECT_TRUE(a.values == b.values);
    EXPECT_FALSE(a.values == mock.generate(img, mask, sample_prompt(store, 1), 43).values);
    PromptChoice other{0, store.positives[0], store.negative}, third{1, store.positives[1], store.negative};
    EXPECT_FALSE(mock.generate(img, mask, other, 42).values == mock.generate(img, mask, third, 42).values);
    for (Index i = 0; i < a.values.size(); ++i) {
        const float v = a.values.data()[i];
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
        ASSERT_EQ(v, std::round(v * 255.0f) / 255.0f);
    }
}

TEST(Composite, ZeroMaskIsBitIdentical) {
    const auto img = scene(5);
    const Raster<float> zero = Raster<float>::Zero(img.height, img.width);
    const auto rec = inpaint("a", img, zero, sample_prompt(PromptStore::standard(), 0), MockInpainter{}, 1, 0);
    ASSERT_EQ(rec.image.values.size(), img.values.size());
    EXPECT_EQ(std::memcmp(rec.image.values.data(), img.values.data(), sizeof(float) * img.values.size()), 0);
}

TEST(Composite, MockKeepsUnmaskedPixels) {
    const auto img = scene(6);
    const auto mask = random_mask(img.height, img.width, 7);
    const auto rec = inpaint("a", img, mask, sample_prompt(PromptStore::standard(), 3), MockInpainter{}, 9, 2);
    expect_unmasked_identical(img, rec.image, mask);
    EXPECT_EQ(rec.backend, "mock");
    EXPECT_EQ(rec.created_epoch, 2);
    EXPECT_THROW(composite(img, Image<float>(3, 2, 2), mask), ShapeError);
}

TEST(Service, StubServiceKeepsUnmaskedPixelsAndSendsPayload) {
    StubService stub;
    DiffusionServiceInpainter svc({stub.url(), 5.0, 0});
    const auto img = scene(8, 32, 40);
    const auto mask = random_mask(32, 40, 9);
    const auto prompt = sample_prompt(PromptStore::standard(), 4);
    const auto rec = inpaint("b", img, mask, prompt, svc, 77, 1);
    expect_unmasked_identical(img, rec.image, mask);
    for (Index p = 0; p < img.cells(); ++p)
        if (mask.data()[p] > 0.5f) ASSERT_EQ(rec.image.values(0, p), 200.0f / 255.0f);
    EXPECT_EQ(rec.backend, "diffusion-service");
    EXPECT_EQ(stub.last_request.at("prompt"), prompt.positive);
    EXPECT_EQ(stub.last_request.at("negative_prompt"), prompt.negative);
    EXPECT_EQ(stub.last_request.at("seed"), 77);
    EXPECT_TRUE(io::decode_mask_png(io::base64_decode(stub.last_request.at("mask").get<std::string>())) == mask);
}

TEST(Service, ErrorClassification) {
    StubService stub;
    const auto img = scene(10, 16, 16);
    const auto mask = random_mask(16, 16, 1);
    const auto prompt = sample_prompt(PromptStore::standard(), 0);

    stub.mode = "garbage";
    EXPECT_THROW(DiffusionServiceInpainter({stub.url(), 5.0, 3}).generate(img, mask, prompt, 0), PermanentError);
    stub.mode = "wrong-size";
    EXPECT_THROW(DiffusionServiceInpainter({stub.url(), 5.0, 3}).generate(img, mask, prompt, 0), PermanentError);
    stub.mode = "400";
    stub.hits = 0;
    EXPECT_THROW(DiffusionServiceInpainter({stub.url(), 5.0, 3}).generate(img, mask, prompt, 0), PermanentError);
    EXPECT_EQ(stub.hits.load(), 1);  // no retry on 4xx
    stub.mode = "500";
    stub.hits = 0;
    EXPECT_THROW(DiffusionServiceInpainter({stub.url(), 5.0, 2}).generate(img, mask, prompt, 0), RetriableError);
    EXPECT_EQ(stub.hits.load(), 3);
}

TEST(Service, UnreachableIsRetriable) {
    // Bind and release a port so nothing is listening on it.
    int port;
    {
        httplib::Server s;
        port = s.bind_to_any_port("127.0.0.1");
    }
    DiffusionServiceInpainter svc({"http://127.0.0.1:" + std::to_string(port) + "/inpaint", 1.0, 1});
    const auto img = scene(11, 16, 16);
    try {
        svc.generate(img, random_mask(16, 16, 2), sample_prompt(PromptStore::standard(), 0), 0);
        FAIL() << "expected RetriableError";
    } catch (const RetriableError& e) {
        EXPECT_NE(std::string(e.what()).find("2 attempt"), std::string::npos) << e.what();
    }
}

TEST(Backend, Factory) {
    EXPECT_EQ(make_backend("mock")->tag(), "mock");
    EXPECT_EQ(make_backend("diffusion-service")->tag(), "diffusion-service");
    EXPECT_THROW(make_backend("dalle"), Error);
    EXPECT_THROW(DiffusionServiceInpainter({"localhost:7860", 1.0, 0}), Error);
}

// ---------------------------------------------------------------------------
// store and workers

TEST(Store, CommitLoadSnapshot) {
    const InpaintStore store(scratch("store"));
    const auto img = scene(12, 24, 24);
    const auto mask = random_mask(24, 24, 3);
    for (const std::string id : {"z/scene", "a.jpg", "m"})
        store.commit(inpaint(id, img, mask, sample_prompt(PromptStore::standard(), 5), MockInpainter{}, 1, 4));
    const auto snap = store.snapshot();
    ASSERT_EQ(snap.size(), 3u);
    EXPECT_EQ(snap[0].source_id, "a.jpg");
    EXPECT_EQ(snap[2].source_id, "z/scene");
    EXPECT_EQ(snap[0].created_epoch, 4);
    EXPECT_EQ(snap[0].prompt_index, sample_prompt(PromptStore::standard(), 5).index);
    EXPECT_TRUE(snap[0].mask == mask);
    expect_unmasked_identical(img, snap[0].image, mask);

    // A newer record replaces the old one.
    store.commit(inpaint("m", img, mask, sample_prompt(PromptStore::standard(), 6), MockInpainter{}, 2, 8));
    EXPECT_EQ(store.load("m")->created_epoch, 8);
    EXPECT_EQ(store.snapshot().size(), 3u);
    EXPECT_FALSE(store.load("nope").has_value());
}

TEST(Store, IncompleteEntriesAreSkipped) {
    const InpaintStore store(scratch("store-partial"));
    const auto img = scene(13, 16, 16);
    const auto mask = random_mask(16, 16, 4);
    store.commit(inpaint("good", img, mask, sample_prompt(PromptStore::standard(), 0), MockInpainter{}, 1, 0));
    // Image without a sidecar, and a sidecar pointing at a corrupted image.
    std::filesystem::create_directories(store.root() / "orphan");
    io::write_png(store.root() / "orphan" / "image.png", img);
    store.commit(inpaint("bad", img, mask, sample_prompt(PromptStore::standard(), 0), MockInpainter{}, 1, 0));
    for (const auto& e : std::filesystem::recursive_directory_iterator(store.root()))
        if (e.path().parent_path().filename().string().rfind("bad", 0) == 0 &&
            e.path().filename().string().rfind("image-", 0) == 0)
            io::write_file_atomic(e.path(), std::string_view("truncated"));
    const auto snap = store.snapshot();
    ASSERT_EQ(snap.size(), 1u);
    EXPECT_EQ(snap[0].source_id, "good");
}

TEST(Workers, ProcessJobsAndReportFailures) {
    const InpaintStore store(scratch("pool"));
    auto backend = std::make_shared<MockInpainter>();
    InpaintWorkerPool pool(backend, store, 2);
    const auto prompt = sample_prompt(PromptStore::standard(), 1);
    for (int i = 0; i < 6; ++i) {
        InpaintJob job;
        job.source_id = "s" + std::to_string(i);
        job.image = scene(20 + i, 16, 16);
        job.mask = random_mask(16, 16, i);
        job.prompt = prompt;
        job.seed = i;
        pool.submit(std::move(job));
    }
    InpaintJob broken;
    broken.source_id = "broken";
    broken.image = scene(30, 16, 16);
    broken.mask = random_mask(8, 8, 0);
    pool.submit(std::move(broken));
    pool.wait_idle();
    EXPECT_EQ(pool.completed(), 6u);
    ASSERT_EQ(pool.failures().size(), 1u);
    EXPECT_NE(pool.failures()[0].find("broken"), std::string::npos);
    EXPECT_EQ(store.snapshot().size(), 6u);

    // Same job, same bytes, regardless of which worker ran it.
    const auto direct = inpaint("s0", scene(20, 16, 16), random_mask(16, 16, 0), prompt, *backend, 0, 0);
    EXPECT_TRUE(store.load("s0")->image.values == direct.image.values);
}
