#pragma once

#include "tmtb/config.hpp"
#include "tmtb/dataset.hpp"
#include "tmtb/nn.hpp"
#include "tmtb/rng.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace tmtb {

using Model = CountingModel<float>;

// ---------------------------------------------------------------------------
// Weight updates

/// teacher <- decay * teacher + (1 - decay) * student, over every tensor
/// (running statistics included).
template <typename M>
void ema_update(M& teacher, M& student, double decay) {
    require(decay >= 0.0 && decay <= 1.0, "ema decay must be in [0, 1]");
    auto t = nn::parameter_list(teacher);
    auto s = nn::parameter_list(student);
    require_shape(t.size() == s.size(), "ema: teacher and student have different parameter counts");
    using Scalar = typename M::Scalar;
    const auto e = static_cast<Scalar>(1.0 - decay);
    for (std::size_t i = 0; i < t.size(); ++i) {
        require_shape(t[i].value->rows() == s[i].value->rows() && t[i].value->cols() == s[i].value->cols(),
                      "ema: shape mismatch at " + t[i].name);
        // t + (1 - d)(s - t): equal weights stay bit-identical
        *t[i].value += e * (*s[i].value - *t[i].value);
    }
}

/// Adam with decoupled weight decay. Only trainable tensors are touched.
class AdamW {
public:
    AdamW() = default;
    AdamW(const OptimizerConfig& cfg, Model& model);

    void step(Model& model, Model& grad);
    long long steps() const { return t_; }

    std::vector<Mat<float>> m, v;  // moments, in parameter_list order (trainable only)

private:
    friend struct CheckpointAccess;
    OptimizerConfig cfg_;
    long long t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    double mae = 0.0;
    double rmse = 0.0;
    std::vector<double> predicted;
    std::vector<double> ground_truth;
};

/// Whole-image prediction: the image is shrunk (bilinear) if its longest side
/// exceeds max_side, zero-padded to the model stride, and both outputs are
/// cropped back to the unpadded cells.
Model::Output predict(const Model& model, const Image<float>& image, const ScanEngine& engine, Index max_side = 1920);
DensityMap<float> predict_density(const Model& model, const Image<float>& image, const ScanEngine& engine,
                                  Index max_side = 1920);

/// Bilinear resize (align-corners off).
Image<float> resize_bilinear(const Image<float>& img, Index height, Index width);

EvalResult evaluate(const Model& model, const std::vector<Sample>& data, const ScanEngine& engine,
                    Index max_side = 1920);
/// Same metrics for any counter (predicted count per annotated sample).
EvalResult evaluate(const std::function<double(const Sample&)>& count, const std::vector<Sample>& data);

// ---------------------------------------------------------------------------
// Training

struct LabeledView {
    Image<float> image;
    DensityMap<float> density;
};

struct UnlabeledView {
    Image<float> weak;
    Image<float> strong;
};

struct StepMetrics {
    LossComponents components;
    double total = 0.0;
    double lambda = 0.0;
    std::size_t n_labeled = 0, n_unlabeled = 0, n_inpainted = 0;
};

struct EpochMetrics {
    int epoch = 0;
    long long step = 0;
    double loss = 0.0;  // mean total over the epoch's steps
    LossComponents components;
    double lambda = 0.0;
    std::vector<double> omega;
    std::size_t inpainted_samples = 0;
    std::size_t inpaint_failures = 0;
    std::optional<double> val_mae, val_rmse;
    std::string to_json() const;
};

class Trainer {
public:
    /// `val` may be empty; validation metrics are then omitted.
    Trainer(TrainConfig cfg, const Dataset& train, std::vector<Sample> val = {});
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    const TrainConfig& config() const { return cfg_; }
    Model& student() { return student_; }
    Model& teacher() { return teacher_; }
    const ScanEngine& engine() const { return engine_; }
    int epoch() const { return epoch_; }
    long long global_step() const { return step_; }
    const std::vector<EpochMetrics>& history() const { return history_; }
    const std::vector<InpaintRecord>& inpainted() const { return inpainted_; }
    std::size_t steps_per_epoch() const;

    /// One optimizer step followed by the EMA update.
    StepMetrics train_step(const std::vector<LabeledView>& labeled, const std::vector<UnlabeledView>& unlabeled,
                           const std::vector<UnlabeledView>& inpainted, int epoch);

    /// Launches a refresh when epoch % T_inp == 0 (tmtb mode only). Returns
    /// whether one was launched.
    bool inpaint_refresh(int epoch);
    /// Re-reads the inpaint store into memory.
    void reload_inpainted();

    /// Runs the next epoch and appends its metrics (also to metrics.jsonl
    /// under out_dir when `log` is set).
    EpochMetrics run_epoch(bool log = true);
    /// Runs until cfg.epochs, checkpointing each epoch when `checkpoint`.
    void train(bool checkpoint = true, const std::function<void(const EpochMetrics&)>& on_epoch = {});

    void save_checkpoint(const std::filesystem::path& path) const;
    /// Refuses checkpoints with another format version or config digest.
    void load_checkpoint(const std::filesystem::path& path);

    std::filesystem::path inpaint_dir() const;

private:
    LabeledView labeled_view(const Sample& s, Rng& rng) const;
    UnlabeledView unlabeled_view(const Image<float>& img, Rng& rng) const;

    TrainConfig cfg_;
    BinSpec bins_;
    ScanEngine engine_;
    std::vector<Sample> labeled_, unlabeled_, val_;
    Model student_, teacher_;
    AdamW opt_;
    Rng rng_;
    int epoch_ = 0;
    long long step_ = 0;
    std::vector<EpochMetrics> history_;
    std::vector<InpaintRecord> inpainted_;
    std::size_t seen_failures_ = 0;
    std::unique_ptr<InpaintStore> store_;
    std::shared_ptr<const InpaintBackend> backend_;
    std::unique_ptr<InpaintWorkerPool> pool_;
};

/// Config stored in a checkpoint (for `eval` without a config file).
TrainConfig checkpoint_config(const std::filesystem::path& path);
/// Teacher weights from a checkpoint.
Model load_teacher(const std::filesystem::path& path);

}  // namespace tmtb
