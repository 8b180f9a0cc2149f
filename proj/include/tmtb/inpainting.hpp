#pragma once

#include "tmtb/bins.hpp"
#include "tmtb/types.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace tmtb {

// ---------------------------------------------------------------------------
// Prompts

struct PromptStore {
    std::vector<std::string> positives;
    std::string negative;

    /// The fixed 20-entry scene table and the shared negative prompt.
    static PromptStore standard();
};

struct PromptChoice {
    std::size_t index = 0;
    std::string positive;
    std::string negative;
};

PromptChoice sample_prompt(const PromptStore& store, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Masks and weights

/// Full-resolution background mask (1 = inpaint): cells whose most likely bin
/// is the zero-count bin, replicated nearest-neighbour over their stride
/// block. Pixels beyond the last full cell take the nearest cell.
template <typename Scalar>
Raster<float> build_inpaint_mask(const BinProbMap<Scalar>& probs, Index height, Index width) {
    require(probs.stride >= 1, "inpaint mask: invalid stride");
    const IndexRaster bins = argmax_bins(probs);
    Raster<float> mask(height, width);
    for (Index y = 0; y < height; ++y) {
        const Index cy = std::min(y / probs.stride, probs.height - 1);
        for (Index x = 0; x < width; ++x) {
            const Index cx = std::min(x / probs.stride, probs.width - 1);
            mask(y, x) = bins(cy, cx) == 0 ? 1.0f : 0.0f;
        }
    }
    return mask;
}

/// Per-cell |argmax(p_s) - argmax(p_w)|.
template <typename Scalar>
IndexRaster inconsistency_levels(const BinProbMap<Scalar>& p_strong, const BinProbMap<Scalar>& p_weak) {
    require_shape(p_strong.values.rows() == p_weak.values.rows() && p_strong.height == p_weak.height &&
                      p_strong.width == p_weak.width,
                  "inconsistency levels: shape mismatch");
    return (argmax_bins(p_strong) - argmax_bins(p_weak)).cwiseAbs();
}

/// softmax over l = 0..L of exp(-l t / T_inpw).
std::vector<double> level_weights(double epoch, int max_level, double period);

/// Cell weight omega_level if level <= L, else 0.
template <typename Scalar = float>
WeightedMask<Scalar> weighted_mask(const IndexRaster& levels, double epoch, int max_level, double period) {
    const auto omega = level_weights(epoch, max_level, period);
    WeightedMask<Scalar> m(levels.rows(), levels.cols());
    for (Index i = 0; i < levels.size(); ++i) {
        const int l = levels.data()[i];
        require(l >= 0, "inconsistency level must be non-negative");
        m.data()[i] = l <= max_level ? static_cast<Scalar>(omega[static_cast<std::size_t>(l)]) : Scalar(0);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Backends

/// Transient failure (unreachable service, timeout, 5xx). Safe to retry.
class RetriableError : public Error {
public:
    using Error::Error;
};

/// The service answered but the answer is unusable.
class PermanentError : public Error {
public:
    using Error::Error;
};

class InpaintBackend {
public:
    virtual ~InpaintBackend() = default;
    virtual std::string tag() const = 0;
    /// Returns a full-size generated image; only masked pixels are used.
    virtual Image<float> generate(const Image<float>& image, const Raster<float>& mask, const PromptChoice& prompt,
                                  std::uint64_t seed) const = 0;
};

/// Seeded multi-octave value noise coloured by a palette derived from the
/// prompt text. Output is quantised to 8 bits.
class MockInpainter final : public InpaintBackend {
public:
    std::string tag() const override { return "mock"; }
    Image<float> generate(const Image<float>& image, const Raster<float>& mask, const PromptChoice& prompt,
                          std::uint64_t seed) const override;
};

struct ServiceOptions {
    std::string url = "http://127.0.0.1:7860/inpaint";
    double timeout_seconds = 60.0;
    int retries = 2;
};

/// HTTP client for an inpainting service: POST {image, mask, prompt,
/// negative_prompt, seed} (PNG payloads base64-encoded, mask 255 = inpaint),
/// response {image}.
class DiffusionServiceInpainter final : public InpaintBackend {
public:
    explicit DiffusionServiceInpainter(ServiceOptions opts);
    std::string tag() const override { return "diffusion-service"; }
    Image<float> generate(const Image<float>& image, const Raster<float>& mask, const PromptChoice& prompt,
                          std::uint64_t seed) const override;

private:
    ServiceOptions opts_;
    std::string scheme_host_port_;
    std::string path_;
};

std::unique_ptr<InpaintBackend> make_backend(const std::string& name, const ServiceOptions& service = {});

// ---------------------------------------------------------------------------
// Records

struct InpaintRecord {
    std::string source_id;
    Image<float> image;
    Raster<float> mask;
    std::size_t prompt_index = 0;
    int created_epoch = 0;
    std::string backend;
};

/// out = mask ? generated : source, by selection, so unmasked pixels are
/// bit-identical to the source.
Image<float> composite(const Image<float>& source, const Image<float>& generated, const Raster<float>& mask);

InpaintRecord inpaint(const std::string& source_id, const Image<float>& image, const Raster<float>& mask,
                      const PromptChoice& prompt, const InpaintBackend& backend, std::uint64_t seed, int epoch);

/// One directory per source image holding the latest record: a PNG plus a
/// JSON sidecar (prompt index, epoch, backend, mask checksum). Files are
/// written temp-then-rename; the sidecar is written last and names the
/// image file, so a reader never pairs metadata with a partial image.
class InpaintStore {
public:
    explicit InpaintStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    void commit(const InpaintRecord& record) const;
    /// Every complete record currently in the store, ordered by source id.
    /// Incomplete or unreadable entries are skipped.
    std::vector<InpaintRecord> snapshot() const;
    std::optional<InpaintRecord> load(const std::string& source_id) const;

private:
    std::filesystem::path root_;
};

struct InpaintJob {
    std::string source_id;
    Image<float> image;
    Raster<float> mask;
    PromptChoice prompt;
    std::uint64_t seed = 0;
    int epoch = 0;
};

/// Background workers that run jobs against a backend and commit results to
/// a store. Failures are counted and reported, never thrown into the caller.
class InpaintWorkerPool {
public:
    InpaintWorkerPool(std::shared_ptr<const InpaintBackend> backend, InpaintStore store, int threads = 2);
    ~InpaintWorkerPool();
    InpaintWorkerPool(const InpaintWorkerPool&) = delete;
    InpaintWorkerPool& operator=(const InpaintWorkerPool&) = delete;

    void submit(InpaintJob job);
    /// Blocks until the queue is empty and no job is running.
    void wait_idle();
    std::size_t completed() const;
    std::vector<std::string> failures() const;

private:
    void run();

    std::shared_ptr<const InpaintBackend> backend_;
    InpaintStore store_;
    mutable std::mutex mu_;
    std::condition_variable cv_, idle_cv_;
    std::deque<InpaintJob> queue_;
    std::size_t running_ = 0, completed_ = 0;
    std::vector<std::string> failures_;
    bool stop_ = false;
    std::vector<std::thread> threads_;
};

}  // namespace tmtb
