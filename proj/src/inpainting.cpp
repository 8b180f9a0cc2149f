#include "tmtb/inpainting.hpp"
#include "tmtb/io.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

namespace tmtb {

using nlohmann::json;

PromptStore PromptStore::standard() {
    PromptStore s;
    s.positives = {
        "sunset over mountains, a lone eagle soaring, vibrant colors",
        "ancient forest, misty atmosphere, deer grazing among trees",
        "futuristic city skyline, neon-lit drones flying, cyberpunk style",
        "serene beach, seashells scattered on the sand, gentle waves",
        "snowy village, a fox prowling near cozy cabins, northern lights above",
        "bustling marketplace, exotic fruits and spices, colorful fabrics swaying",
        "abandoned castle, ivy-covered walls, crows perched on towers",
        "desert landscape, cacti scattered, a lone lizard basking in the sun",
        "underwater world, coral reefs teeming with fish, jellyfish drifting",
        "enchanted garden, blooming roses, butterflies fluttering around",
        "rainy city street, puddles reflecting streetlights, stray cat in the alley",
        "starry night sky, a full moon shining, an owl perched on a tree",
        "autumn forest, falling leaves in warm tones, a squirrel gathering acorns",
        "medieval town square, horses tied to a post, pigeons pecking on cobblestones",
        "tropical jungle, dense foliage, a parrot perched on a branch",
        "twilight in the mountains, calm lake with lily pads, fireflies glowing",
        "bustling urban park, tall trees with squirrels, children flying kites",
        "ancient ruins, crumbling stone with moss, a snake slithering through the grass",
        "futuristic lab, clean and sterile with robotic arms, plants growing in glass chambers",
        "rustic farmhouse, golden wheat fields swaying, a scarecrow standing tall",
    };
    s.negative = "disfigured face, broken limbs, deformed body parts";
    return s;
}

PromptChoice sample_prompt(const PromptStore& store, std::uint64_t seed) {
    require(!store.positives.empty(), "prompt store has no positive prompts");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, store.positives.size() - 1);
    const std::size_t i = pick(rng);
    return {i, store.positives[i], store.negative};
}

std::vector<double> level_weights(double epoch, int max_level, double period) {
    require(epoch >= 0.0, "level weights: epoch must be non-negative");
    require(max_level >= 0, "level weights: L must be non-negative");
    require(period > 0.0, "level weights: T_inpw must be positive");
    std::vector<double> z(static_cast<std::size_t>(max_level) + 1);
    for (int l = 0; l <= max_level; ++l) z[static_cast<std::size_t>(l)] = std::exp(-l * epoch / period);
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) sum += v = std::exp(v - top);
    for (auto& v : z) v /= sum;
    return z;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

float quantise(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

}  // namespace

Image<float> MockInpainter::generate(const Image<float>& image, const Raster<float>&, const PromptChoice& prompt,
                                     std::uint64_t seed) const {
    const Index h = image.height, w = image.width;
    const std::uint64_t ph = fnv1a(prompt.positive);
    std::mt19937_64 palette_rng(ph);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double lo[3], hi[3];
    for (int c = 0; c < 3; ++c) {
        lo[c] = 0.15 + 0.5 * u(palette_rng);
        hi[c] = std::min(1.0, lo[c] + 0.15 + 0.35 * u(palette_rng));
    }

    std::mt19937_64 rng(seed ^ (ph * 0x9E3779B97F4A7C15ULL));
    Raster<double> noise = Raster<double>::Zero(h, w);
    double amp = 1.0, total = 0.0;
    for (int octave = 0; octave < 3; ++octave, amp *= 0.5) {
        const Index cell = std::max<Index>(4, 32 >> octave);
        const Index gh = h / cell + 2, gw = w / cell + 2;
        Raster<double> lattice(gh, gw);
        for (Index i = 0; i < lattice.size(); ++i) lattice.data()[i] = u(rng);
        for (Index y = 0; y < h; ++y) {
            const double fy = static_cast<double>(y) / cell;
            const Index y0 = static_cast<Index>(fy);
            const double ty = fy - y0, sy = ty * ty * (3 - 2 * ty);
            for (Index x = 0; x < w; ++x) {
                const double fx = static_cast<double>(x) / cell;
                const Index x0 = static_cast<Index>(fx);
                const double tx = fx - x0, sx = tx * tx * (3 - 2 * tx);
                const double top = lattice(y0, x0) * (1 - sx) + lattice(y0, x0 + 1) * sx;
                const double bot = lattice(y0 + 1, x0) * (1 - sx) + lattice(y0 + 1, x0 + 1) * sx;
                noise(y, x) += amp * (top * (1 - sy) + bot * sy);
            }
        }
        total += amp;
    }
    Image<float> out(3, h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const double t = noise(y, x) / total;
            for (int c = 0; c < 3; ++c) out(c, y, x) = quantise(lo[c] + (hi[c] - lo[c]) * t);
        }
    return out;
}

// ---------------------------------------------------------------------------

DiffusionServiceInpainter::DiffusionServiceInpainter(ServiceOptions opts) : opts_(std::move(opts)) {
    const auto scheme = opts_.url.find("://");
    require(scheme != std::string::npos, "service url needs a scheme: " + opts_.url);
    const auto slash = opts_.url.find('/', scheme + 3);
    scheme_host_port_ = opts_.url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : opts_.url.substr(slash);
    require(opts_.timeout_seconds > 0.0, "service timeout must be positive");
    require(opts_.retries >= 0, "service retries must be non-negative");
}

Image<float> DiffusionServiceInpainter::generate(const Image<float>& image, const Raster<float>& mask,
                                                 const PromptChoice& prompt, std::uint64_t seed) const {
    const json body = {{"image", io::base64_encode(io::encode_png(image))},
                       {"mask", io::base64_encode(io::encode_mask_png(mask))},
                       {"prompt", prompt.positive},
                       {"negative_prompt", prompt.negative},
                       {"seed", seed}};
    const std::string payload = body.dump();

    httplib::Client client(scheme_host_port_);
    const auto sec = static_cast<time_t>(opts_.timeout_seconds);
    const auto usec = static_cast<time_t>((opts_.timeout_seconds - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    std::string last_error;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
        auto res = client.Post(path_, payload, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "service returned HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw PermanentError("inpainting service rejected the request: HTTP " + std::to_string(res->status));
        Image<float> out;
        try {
            const json reply = json::parse(res->body);
            out = io::decode_png(io::base64_decode(reply.at("image").get<std::string>()));
        } catch (const std::exception& e) {
            throw PermanentError(std::string("malformed inpainting response: ") + e.what());
        }
        if (out.height != image.height || out.width != image.width)
            throw PermanentError("inpainting response has size " + std::to_string(out.height) + "x" +
                                 std::to_string(out.width) + ", expected " + std::to_string(image.height) + "x" +
                                 std::to_string(image.width));
        return out;
    }
    throw RetriableError("inpainting service unavailable after " + std::to_string(opts_.retries + 1) +
                         " attempt(s): " + last_error);
}

std::unique_ptr<InpaintBackend> make_backend(const std::string& name, const ServiceOptions& service) {
    if (name == "mock") return std::make_unique<MockInpainter>();
    if (name == "diffusion-service" || name == "service") return std::make_unique<DiffusionServiceInpainter>(service);
    throw Error("unknown inpainting backend '" + name + "' (expected mock or diffusion-service)");
}

// ---------------------------------------------------------------------------

Image<float> composite(const Image<float>& source, const Image<float>& generated, const Raster<float>& mask) {
    require_shape(generated.height == source.height && generated.width == source.width &&
                      generated.channels() == source.channels(),
                  "composite: generated image does not match the source");
    require_shape(mask.rows() == source.height && mask.cols() == source.width, "composite: mask does not match the image");
    Image<float> out = source;
    for (Index p = 0; p < source.cells(); ++p)
        if (mask.data()[p] > 0.5f) out.values.col(p) = generated.values.col(p);
    return out;
}

InpaintRecord inpaint(const std::string& source_id, const Image<float>& image, const Raster<float>& mask,
                      const PromptChoice& prompt, const InpaintBackend& backend, std::uint64_t seed, int epoch) {
    require_shape(mask.rows() == image.height && mask.cols() == image.width, "inpaint: mask does not match the image");
    InpaintRecord rec;
    rec.source_id = source_id;
    rec.mask = mask;
    rec.prompt_index = prompt.index;
    rec.created_epoch = epoch;
    rec.backend = backend.tag();
    rec.image = (mask.array() > 0.5f).any() ? composite(image, backend.generate(image, mask, prompt, seed), mask) : image;
    return rec;
}

// ---------------------------------------------------------------------------

namespace {

std::string sanitise(const std::string& id) {
    std::string out;
    for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    return out + "-" + io::sha256_hex(id).substr(0, 8);
}

std::vector<std::uint8_t> mask_bytes(const Raster<float>& m) {
    std::vector<std::uint8_t> b(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.size(); ++i) b[static_cast<std::size_t>(i)] = m.data()[i] > 0.5f ? 1 : 0;
    return b;
}

}  // namespace

InpaintStore::InpaintStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

void InpaintStore::commit(const InpaintRecord& rec) const {
    const auto dir = root_ / sanitise(rec.source_id);
    std::filesystem::create_directories(dir);
    const auto png = io::encode_png(rec.image);
    const auto mask_png = io::encode_mask_png(rec.mask);
    const std::string tag = io::sha256_hex(png).substr(0, 16);
    const std::string image_name = "image-" + tag + ".png", mask_name = "mask-" + tag + ".png";
    io::write_file_atomic(dir / image_name, png);
    io::write_file_atomic(dir / mask_name, mask_png);
    const json meta = {{"source_id", rec.source_id},
                       {"image_file", image_name},
                       {"mask_file", mask_name},
                       {"image_sha256", io::sha256_hex(png)},
                       {"mask_sha256", io::sha256_hex(mask_bytes(rec.mask))},
                       {"prompt_index", rec.prompt_index},
                       {"epoch", rec.created_epoch},
                       {"backend", rec.backend}};
    io::write_file_atomic(dir / "record.json", meta.dump(2));
    // Older generations are no longer referenced by the sidecar.
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name != "record.json" && name != image_name && name != mask_name && name.find(".tmp.") == std::string::npos)
            std::filesystem::remove(entry.path());
    }
}

std::optional<InpaintRecord> InpaintStore::load(const std::string& source_id) const {
    const auto dir = root_ / sanitise(source_id);
    try {
        const auto text = io::read_file(dir / "record.json");
        const json meta = json::parse(text.begin(), text.end());
        const auto png = io::read_file(dir / meta.at("image_file").get<std::string>());
        if (io::sha256_hex(png) != meta.at("image_sha256").get<std::string>()) return std::nullopt;
        InpaintRecord rec;
        rec.source_id = meta.at("source_id").get<std::string>();
        rec.image = io::decode_png(png);
        rec.mask = io::decode_mask_png(io::read_file(dir / meta.at("mask_file").get<std::string>()));
        if (io::sha256_hex(mask_bytes(rec.mask)) != meta.at("mask_sha256").get<std::string>()) return std::nullopt;
        rec.prompt_index = meta.at("prompt_index").get<std::size_t>();
        rec.created_epoch = meta.at("epoch").get<int>();
        rec.backend = meta.at("backend").get<std::string>();
        return rec;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::vector<InpaintRecord> InpaintStore::snapshot() const {
    std::vector<InpaintRecord> out;
    if (!std::filesystem::exists(root_)) return out;
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
        if (!entry.is_directory()) continue;
        try {
            const auto text = io::read_file(entry.path() / "record.json");
            ids.push_back(json::parse(text.begin(), text.end()).at("source_id").get<std::string>());
        } catch (const std::exception&) {
        }
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids)
        if (auto rec = load(id)) out.push_back(std::move(*rec));
    return out;
}

// ---------------------------------------------------------------------------

InpaintWorkerPool::InpaintWorkerPool(std::shared_ptr<const InpaintBackend> backend, InpaintStore store, int threads)
    : backend_(std::move(backend)), store_(std::move(store)) {
    require(threads >= 1, "inpaint pool needs at least one worker");
    for (int i = 0; i < threads; ++i) threads_.emplace_back([this] { run(); });
}

InpaintWorkerPool::~InpaintWorkerPool() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

void InpaintWorkerPool::submit(InpaintJob job) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        queue_.push_back(std::move(job));
    }
    cv_.notify_one();
}

void InpaintWorkerPool::wait_idle() {
    std::unique_lock<std::mutex> lock(mu_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && running_ == 0; });
}

std::size_t InpaintWorkerPool::completed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return completed_;
}

std::vector<std::string> InpaintWorkerPool::failures() const {
    std::lock_guard<std::mutex> lock(mu_);
    return failures_;
}

void InpaintWorkerPool::run() {
    for (;;) {
        InpaintJob job;
        {
            std::unique_lock<std::mutex> lock(mu_);
            cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
            if (queue_.empty()) return;
            job = std::move(queue_.front());
            queue_.pop_front();
            ++running_;
        }
        std::string failure;
        try {
            store_.commit(inpaint(job.source_id, job.image, job.mask, job.prompt, *backend_, job.seed, job.epoch));
        } catch (const std::exception& e) {
            failure = job.source_id + ": " + e.what();
        }
        {
            std::lock_guard<std::mutex> lock(mu_);
            --running_;
            if (failure.empty())
                ++completed_;
            else
                failures_.push_back(std::move(failure));
            if (queue_.empty() && running_ == 0) idle_cv_.notify_all();
        }
    }
}

}  // namespace tmtb
