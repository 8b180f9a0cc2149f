#pragma once

#include "tmtb/augmentation.hpp"
#include "tmtb/bins.hpp"
#include "tmtb/density.hpp"
#include "tmtb/inpainting.hpp"
#include "tmtb/losses.hpp"
#include "tmtb/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tmtb {

struct OptimizerConfig {
    std::string kind = "adamw";
    double lr = 1e-5;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct InpaintConfig {
    std::string backend = "mock";  // mock | diffusion-service
    ServiceOptions service;
    bool blocking = true;          // wait for a refresh before continuing
    int workers = 1;
    double slot_probability = 0.5; // chance an unlabeled slot takes an inpainted record
};

enum class TrainMode { tmtb, supervised };

struct TrainConfig {
    TrainMode mode = TrainMode::tmtb;
    double labeled_fraction = 0.05;
    int labeled_per_batch = 2;
    int unlabeled_per_batch = 6;
    OptimizerConfig optimizer;
    double ema_decay = 0.97;
    int epochs = 100;
    int steps_per_epoch = 0;  // 0: one pass over the unlabeled pool
    int T_w = 20;
    int T_inp = 80;
    double T_inpw = 100.0;
    int L = 2;
    Index crop = 512;
    double flip_p = 0.5;
    Index stride = 8;
    std::vector<double> bin_edges{0.0, 1.0, 2.0, 4.0, 8.0};
    std::uint64_t seed = 0;
    std::string scan_backend = "reference";  // reference | native
    std::string scan_library;
    ModelConfig model;
    LossWeights loss;
    DensityOptions density;
    StrongAugmentConfig strong;
    InpaintConfig inpaint;
    Index eval_max_side = 1920;
    int eval_every = 1;  // epochs; 0 disables per-epoch validation
    std::string train_data;
    std::string val_data;
    std::string out_dir = "runs/default";

    BinSpec bins() const { return BinSpec(bin_edges); }
    /// Throws Error naming the first violated invariant.
    void validate() const;
};

/// Batch split from the labeled fraction: 2:6 up to 10% labels, 4:4 above.
std::pair<int, int> default_batch_composition(double labeled_fraction);

/// JSON with every field; nested objects mirror the struct layout.
std::string config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// SHA-256 of the configuration with run-length and output location removed,
/// so a run can be resumed with more epochs or from a moved directory.
std::string config_digest(const TrainConfig& cfg);

}  // namespace tmtb
