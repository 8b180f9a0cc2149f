// Command-line front end: training, evaluation and the small utilities
// around them.
#include "tmtb/io.hpp"
#include "tmtb/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <iostream>

using namespace tmtb;
using nlohmann::json;

namespace {

int cmd_train(const std::string& config_path, const std::string& resume) {
    const auto cfg = load_config(config_path);
    require(!cfg.train_data.empty(), "config: data.train is required");
    const auto train = Dataset::load(cfg.train_data);
    std::vector<Sample> val;
    if (!cfg.val_data.empty()) val = Dataset::load(cfg.val_data).samples;
    std::filesystem::create_directories(cfg.out_dir);
    io::write_file_atomic(std::filesystem::path(cfg.out_dir) / "config.json", config_to_json(cfg));

    Trainer trainer(cfg, train, std::move(val));
    if (!resume.empty()) {
        trainer.load_checkpoint(resume);
        spdlog::info("resumed from {} at epoch {}", resume, trainer.epoch());
    }
    spdlog::info("training: {} epochs x {} steps, scan {}, mode {}", cfg.epochs, trainer.steps_per_epoch(),
                 trainer.engine().name(), cfg.mode == TrainMode::tmtb ? "tmtb" : "supervised");
    trainer.train(true);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& counts_out) {
    const auto cfg = checkpoint_config(ckpt);
    const auto model = load_teacher(ckpt);
    const auto ds = Dataset::load(data);
    const auto engine = cfg.scan_backend == "native" ? ScanEngine::load_native(cfg.scan_library) : ScanEngine::reference();
    const auto r = evaluate(model, ds.samples, engine, cfg.eval_max_side);
    json out = {{"mae", r.mae}, {"rmse", r.rmse}, {"images", ds.size()}};
    std::cout << out.dump() << '\n';
    if (!counts_out.empty()) {
        std::string lines;
        for (std::size_t i = 0; i < ds.size(); ++i)
            lines += json{{"image", ds.samples[i].id}, {"predicted", r.predicted[i]}, {"ground_truth", r.ground_truth[i]}}
                         .dump() +
                     "\n";
        io::write_file_atomic(counts_out, lines);
    }
    return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out) {
    const auto ds = synth_dataset(spec);
    ds.save(out);
    std::size_t total = 0;
    for (const auto& s : ds.samples) total += s.points->count();
    spdlog::info("wrote {} scenes ({} heads) to {}", ds.size(), total, out);
    return 0;
}

int cmd_inpaint_preview(const std::string& image_path, const std::string& ckpt, const std::string& backend_name,
                        const std::string& url, const std::string& out, std::uint64_t seed) {
    const auto cfg = checkpoint_config(ckpt);
    const auto model = load_teacher(ckpt);
    const auto img = io::read_png(image_path);
    const auto pred = predict(model, img, ScanEngine::reference(), std::numeric_limits<Index>::max());
    const auto mask = build_inpaint_mask(pred.probs, img.height, img.width);

    ServiceOptions svc = cfg.inpaint.service;
    if (!url.empty()) svc.url = url;
    const auto backend = make_backend(backend_name, svc);
    const auto prompt = sample_prompt(PromptStore::standard(), seed);
    const auto rec = inpaint(std::filesystem::path(image_path).filename().string(), img, mask, prompt, *backend, seed, 0);

    const std::filesystem::path dir(out);
    io::write_png(dir / "inpainted.png", rec.image);
    io::write_file_atomic(dir / "mask.png", io::encode_mask_png(mask));
    const json meta = {{"prompt", prompt.positive},
                       {"negative_prompt", prompt.negative},
                       {"prompt_index", prompt.index},
                       {"backend", rec.backend},
                       {"masked_fraction", mask.mean()},
                       {"predicted_count", pred.density.count()}};
    io::write_file_atomic(dir / "preview.json", meta.dump(2));
    std::cout << meta.dump() << '\n';
    return 0;
}

// 3x5 digit glyphs, one row per 3-bit group (MSB left).
constexpr std::array<std::array<std::uint8_t, 5>, 11> kGlyphs{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1}, {7, 4, 7, 1, 7},
    {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}, {0, 0, 0, 0, 2},  // '.'
}};

int cmd_plot(const std::string& density_path, const std::string& out, int scale) {
    const auto dm = io::read_dmap(density_path);
    require(scale >= 1, "plot: scale must be positive");
    const Index h = dm.height() * scale, w = dm.width() * scale;
    const float peak = std::max(dm.values.maxCoeff(), 1e-12f);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h * w * 3));
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            // black -> red -> yellow -> white
            const float t = std::clamp(dm.values(y / scale, x / scale) / peak, 0.0f, 1.0f);
            const float r = std::min(1.0f, 3 * t), g = std::clamp(3 * t - 1, 0.0f, 1.0f), b = std::clamp(3 * t - 2, 0.0f, 1.0f);
            auto* px = &rgb[static_cast<std::size_t>((y * w + x) * 3)];
            px[0] = static_cast<std::uint8_t>(std::lround(255 * r));
            px[1] = static_cast<std::uint8_t>(std::lround(255 * g));
            px[2] = static_cast<std::uint8_t>(std::lround(255 * b));
        }

    char text[32];
    std::snprintf(text, sizeof text, "%.2f", static_cast<double>(dm.count()));
    const Index px_size = std::max<Index>(1, std::min<Index>(h, w) / 48);
    Index cx = px_size;
    for (const char* c = text; *c; ++c, cx += 4 * px_size) {
        const int gi = *c == '.' ? 10 : (*c >= '0' && *c <= '9' ? *c - '0' : -1);
        if (gi < 0) continue;
        for (Index gy = 0; gy < 5; ++gy)
            for (Index gx = 0; gx < 3; ++gx) {
                if (!((kGlyphs[static_cast<std::size_t>(gi)][static_cast<std::size_t>(gy)] >> (2 - gx)) & 1)) continue;
                for (Index dy = 0; dy < px_size; ++dy)
                    for (Index dx = 0; dx < px_size; ++dx) {
                        const Index yy = px_size + gy * px_size + dy, xx = cx + gx * px_size + dx;
                        if (yy >= h || xx >= w) continue;
                        auto* px = &rgb[static_cast<std::size_t>((yy * w + xx) * 3)];
                        px[0] = 0;
                        px[1] = 255;
                        px[2] = 255;
                    }
            }
    }
    io::write_file_atomic(out, io::encode_rgb8(rgb, h, w));
    std::cout << json{{"count", dm.count()}, {"height", dm.height()}, {"width", dm.width()}}.dump() << '\n';
    return 0;
}

int cmd_bench_scan(const std::string& backend, const std::string& library, Index length, Index channels, Index state,
                   int repeats) {
    const auto engine = backend == "native" ? ScanEngine::load_native(library) : ScanEngine::reference();
    if (backend == "native" && !engine.is_native()) spdlog::warn("native scan unavailable: {}", engine.fallback_reason());
    Rng rng(1);
    std::normal_distribution<float> n(0, 1);
    std::uniform_real_distribution<float> u(0.01f, 1.0f);
    Mat<float> x(channels, length);
    ScanParams<float> p;
    p.delta.resize(channels, length);
    p.A.resize(channels, state);
    p.B.resize(state, length);
    p.C.resize(state, length);
    p.D.resize(channels);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    for (Index i = 0; i < p.delta.size(); ++i) p.delta.data()[i] = u(rng);
    for (Index i = 0; i < p.A.size(); ++i) p.A.data()[i] = -u(rng);
    for (Index i = 0; i < p.B.size(); ++i) p.B.data()[i] = n(rng);
    for (Index i = 0; i < p.C.size(); ++i) p.C.data()[i] = n(rng);
    for (Index i = 0; i < p.D.size(); ++i) p.D.data()[i] = n(rng);

    double checksum = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) checksum += static_cast<double>(selective_scan(x, p, engine).sum());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double tokens = static_cast<double>(length) * repeats / secs;
    std::cout << json{{"backend", engine.name()},
                      {"length", length},
                      {"channels", channels},
                      {"state", state},
                      {"repeats", repeats},
                      {"seconds", secs},
                      {"tokens_per_second", tokens},
                      {"checksum", checksum}}
                     .dump()
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised crowd counting: training, evaluation and tools"};
    app.require_subcommand(1);

    std::string config, resume;
    auto* train = app.add_subcommand("train", "Train a student/teacher pair");
    train->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    train->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);

    std::string ckpt, data, counts;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's teacher on a dataset");
    eval->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--counts", counts, "write per-image counts (JSON lines) here");

    SynthSpec spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write a synthetic crowd dataset");
    synth->add_option("--n", spec.n, "number of scenes")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", spec.seed, "seed")->required();
    synth->add_option("--height", spec.height, "scene height");
    synth->add_option("--width", spec.width, "scene width");
    synth->add_option("--min-count", spec.min_count, "fewest heads per scene");
    synth->add_option("--max-count", spec.max_count, "most heads per scene");

    std::string image, backend = "mock", url, preview_out;
    std::uint64_t preview_seed = 0;
    auto* preview = app.add_subcommand("inpaint-preview", "Inpaint one image's predicted background");
    preview->add_option("--image", image, "PNG image")->required()->check(CLI::ExistingFile);
    preview->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    preview->add_option("--backend", backend, "mock or diffusion-service")->check(CLI::IsMember({"mock", "diffusion-service"}));
    preview->add_option("--url", url, "service URL (diffusion-service backend)");
    preview->add_option("--out", preview_out, "output directory")->required();
    preview->add_option("--seed", preview_seed, "prompt/generation seed");

    std::string density, plot_out;
    int scale = 8;
    auto* plot = app.add_subcommand("plot", "Render a density raster with its count");
    plot->add_option("--density", density, "DMAP file")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", plot_out, "output PNG")->required();
    plot->add_option("--scale", scale, "pixels per cell");

    std::string scan_backend = "reference", library;
    Index length = 4096, channels = 16, state = 16;
    int repeats = 5;
    auto* bench = app.add_subcommand("bench-scan", "Selective-scan throughput");
    bench->add_option("--backend", scan_backend, "reference or native")->check(CLI::IsMember({"reference", "native"}));
    bench->add_option("--library", library, "native scan library (else $TMTB_SCAN_LIBRARY)");
    bench->add_option("--length", length, "sequence length");
    bench->add_option("--channels", channels, "channels");
    bench->add_option("--state", state, "state size");
    bench->add_option("--repeats", repeats, "repetitions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config, resume);
        if (*eval) return cmd_eval(ckpt, data, counts);
        if (*synth) return cmd_synth(spec, synth_out);
        if (*preview) return cmd_inpaint_preview(image, ckpt, backend, url, preview_out, preview_seed);
        if (*plot) return cmd_plot(density, plot_out, scale);
        if (*bench) return cmd_bench_scan(scan_backend, library, length, channels, state, repeats);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
