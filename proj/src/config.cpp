#include "tmtb/config.hpp"
#include "tmtb/io.hpp"

#include <json.hpp>

#include <set>

namespace tmtb {

using nlohmann::json;

namespace {

/// Reads fields out of one JSON object and complains about leftovers.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        require(j_.is_object(), "config: " + where_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error("config: " + where_ + key + ": " + e.what());
        }
    }

    /// Nested object, or nullptr when absent.
    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw Error("config: unknown key '" + where_ + k + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

const char* mode_name(TrainMode m) { return m == TrainMode::tmtb ? "tmtb" : "supervised"; }

TrainMode parse_mode(const std::string& s) {
    if (s == "tmtb") return TrainMode::tmtb;
    if (s == "supervised") return TrainMode::supervised;
    throw Error("config: mode must be 'tmtb' or 'supervised', got '" + s + "'");
}

json to_json(const TrainConfig& c) {
    const auto& b = c.model.backbone;
    return json{
        {"mode", mode_name(c.mode)},
        {"labeled_fraction", c.labeled_fraction},
        {"batch", {{"labeled", c.labeled_per_batch}, {"unlabeled", c.unlabeled_per_batch}}},
        {"optimizer",
         {{"kind", c.optimizer.kind},
          {"lr", c.optimizer.lr},
          {"weight_decay", c.optimizer.weight_decay},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"eps", c.optimizer.eps}}},
        {"ema_decay", c.ema_decay},
        {"epochs", c.epochs},
        {"steps_per_epoch", c.steps_per_epoch},
        {"T_w", c.T_w},
        {"T_inp", c.T_inp},
        {"T_inpw", c.T_inpw},
        {"L", c.L},
        {"crop", c.crop},
        {"flip_p", c.flip_p},
        {"stride", c.stride},
        {"bin_edges", c.bin_edges},
        {"seed", c.seed},
        {"scan", {{"backend", c.scan_backend}, {"library", c.scan_library}}},
        {"model",
         {{"patch", b.patch},
          {"dim1", b.dim1},
          {"dim2", b.dim2},
          {"depth1", b.depth1},
          {"depth2", b.depth2},
          {"state_dim", b.state_dim},
          {"expand", b.expand},
          {"head_hidden", c.model.head_hidden},
          {"head_upsample", c.model.head_upsample}}},
        {"loss",
         {{"alpha", c.loss.alpha},
          {"scales", c.loss.scales},
          {"tau", c.loss.tau},
          {"reg", c.loss.reg},
          {"cls", c.loss.cls},
          {"unsup", c.loss.unsup},
          {"inpaint", c.loss.inpaint}}},
        {"density",
         {{"mode", c.density.mode == KernelMode::fixed ? "fixed" : "adaptive"},
          {"sigma_fixed", c.density.sigma_fixed},
          {"beta", c.density.adaptive_beta},
          {"neighbours", c.density.adaptive_neighbours},
          {"sigma_min", c.density.sigma_min},
          {"sigma_max", c.density.sigma_max}}},
        {"augment",
         {{"brightness", c.strong.brightness},
          {"contrast", c.strong.contrast},
          {"saturation", c.strong.saturation},
          {"grayscale_p", c.strong.grayscale_p},
          {"blur_p", c.strong.blur_p},
          {"blur_sigma_min", c.strong.blur_sigma_min},
          {"blur_sigma_max", c.strong.blur_sigma_max},
          {"patch_size", c.strong.patch_size},
          {"mask_ratio", c.strong.mask_ratio}}},
        {"inpaint",
         {{"backend", c.inpaint.backend},
          {"url", c.inpaint.service.url},
          {"timeout_seconds", c.inpaint.service.timeout_seconds},
          {"retries", c.inpaint.service.retries},
          {"blocking", c.inpaint.blocking},
          {"workers", c.inpaint.workers},
          {"slot_probability", c.inpaint.slot_probability}}},
        {"eval", {{"max_side", c.eval_max_side}, {"every", c.eval_every}}},
        {"data", {{"train", c.train_data}, {"val", c.val_data}}},
        {"out_dir", c.out_dir},
    };
}

}  // namespace

std::pair<int, int> default_batch_composition(double labeled_fraction) {
    return labeled_fraction <= 0.1 ? std::pair{2, 6} : std::pair{4, 4};
}

void TrainConfig::validate() const {
    require(labeled_fraction > 0.0 && labeled_fraction <= 1.0, "config: labeled_fraction must be in (0, 1]");
    require(labeled_per_batch >= 1, "config: batch.labeled must be positive");
    require(unlabeled_per_batch >= 0, "config: batch.unlabeled must be non-negative");
    require(mode == TrainMode::supervised || unlabeled_per_batch >= 1, "config: tmtb mode needs unlabeled slots");
    require(optimizer.kind == "adamw", "config: optimizer.kind must be 'adamw'");
    require(optimizer.lr > 0.0, "config: optimizer.lr must be positive");
    require(optimizer.weight_decay >= 0.0, "config: optimizer.weight_decay must be non-negative");
    require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
            "config: optimizer betas must be in [0, 1)");
    require(ema_decay > 0.0 && ema_decay < 1.0, "config: ema_decay must be in (0, 1)");
    require(epochs >= 0 && steps_per_epoch >= 0, "config: epochs and steps_per_epoch must be non-negative");
    require(T_w >= 0 && T_inp >= 0 && T_inpw > 0.0 && L >= 0, "config: schedule horizons must be non-negative");
    require(model.backbone.patch >= 1 && model.head_upsample >= 1, "config: invalid model strides");
    require(stride == model.backbone.output_stride() / model.head_upsample &&
                model.backbone.output_stride() % model.head_upsample == 0,
            "config: stride " + std::to_string(stride) + " does not match the model output stride " +
                std::to_string(model.backbone.output_stride() / model.head_upsample));
    require(crop > 0 && crop % stride == 0 && crop % model.backbone.output_stride() == 0,
            "config: crop must be a multiple of the stride");
    require(strong.patch_size >= 1 && crop % strong.patch_size == 0, "config: crop must be a multiple of augment.patch_size");
    require(strong.mask_ratio >= 0.0 && strong.mask_ratio <= 1.0, "config: augment.mask_ratio must be in [0, 1]");
    require(flip_p >= 0.0 && flip_p <= 1.0, "config: flip_p must be in [0, 1]");
    require(scan_backend == "reference" || scan_backend == "native", "config: scan.backend must be reference or native");
    require(inpaint.backend == "mock" || inpaint.backend == "diffusion-service",
            "config: inpaint.backend must be mock or diffusion-service");
    require(inpaint.workers >= 1, "config: inpaint.workers must be positive");
    require(inpaint.slot_probability >= 0.0 && inpaint.slot_probability <= 1.0,
            "config: inpaint.slot_probability must be in [0, 1]");
    require(eval_max_side >= model.backbone.output_stride() && eval_every >= 0, "config: invalid eval settings");
    require(loss.scales >= 1 && crop / stride >= (Index(1) << loss.scales),
            "config: crop too small for the SSIM pyramid");
    bins();  // validates edges
}

std::string config_to_json(const TrainConfig& cfg) { return to_json(cfg).dump(2); }

TrainConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("config: not valid JSON: ") + e.what());
    }
    TrainConfig c;
    Reader r(j, "");
    std::string mode = mode_name(c.mode);
    r.get("mode", mode);
    c.mode = parse_mode(mode);
    r.get("labeled_fraction", c.labeled_fraction);
    std::tie(c.labeled_per_batch, c.unlabeled_per_batch) = default_batch_composition(c.labeled_fraction);
    if (const json* b = r.child("batch")) {
        Reader rb(*b, "batch.");
        rb.get("labeled", c.labeled_per_batch);
        rb.get("unlabeled", c.unlabeled_per_batch);
        rb.finish();
    }
    if (const json* o = r.child("optimizer")) {
        Reader ro(*o, "optimizer.");
        ro.get("kind", c.optimizer.kind);
        ro.get("lr", c.optimizer.lr);
        ro.get("weight_decay", c.optimizer.weight_decay);
        ro.get("beta1", c.optimizer.beta1);
        ro.get("beta2", c.optimizer.beta2);
        ro.get("eps", c.optimizer.eps);
        ro.finish();
    }
    r.get("ema_decay", c.ema_decay);
    r.get("epochs", c.epochs);
    r.get("steps_per_epoch", c.steps_per_epoch);
    r.get("T_w", c.T_w);
    r.get("T_inp", c.T_inp);
    r.get("T_inpw", c.T_inpw);
    r.get("L", c.L);
    r.get("crop", c.crop);
    r.get("flip_p", c.flip_p);
    r.get("stride", c.stride);
    r.get("bin_edges", c.bin_edges);
    r.get("seed", c.seed);
    if (const json* s = r.child("scan")) {
        Reader rs(*s, "scan.");
        rs.get("backend", c.scan_backend);
        rs.get("library", c.scan_library);
        rs.finish();
    }
    if (const json* m = r.child("model")) {
        Reader rm(*m, "model.");
        auto& b = c.model.backbone;
        rm.get("patch", b.patch);
        rm.get("dim1", b.dim1);
        rm.get("dim2", b.dim2);
        rm.get("depth1", b.depth1);
        rm.get("depth2", b.depth2);
        rm.get("state_dim", b.state_dim);
        rm.get("expand", b.expand);
        rm.get("head_hidden", c.model.head_hidden);
        rm.get("head_upsample", c.model.head_upsample);
        rm.finish();
    }
    if (const json* l = r.child("loss")) {
        Reader rl(*l, "loss.");
        rl.get("alpha", c.loss.alpha);
        rl.get("scales", c.loss.scales);
        rl.get("tau", c.loss.tau);
        rl.get("reg", c.loss.reg);
        rl.get("cls", c.loss.cls);
        rl.get("unsup", c.loss.unsup);
        rl.get("inpaint", c.loss.inpaint);
        rl.finish();
    }
    if (const json* d = r.child("density")) {
        Reader rd(*d, "density.");
        std::string kmode = c.density.mode == KernelMode::fixed ? "fixed" : "adaptive";
        rd.get("mode", kmode);
        require(kmode == "fixed" || kmode == "adaptive", "config: density.mode must be fixed or adaptive");
        c.density.mode = kmode == "fixed" ? KernelMode::fixed : KernelMode::adaptive;
        rd.get("sigma_fixed", c.density.sigma_fixed);
        rd.get("beta", c.density.adaptive_beta);
        rd.get("neighbours", c.density.adaptive_neighbours);
        rd.get("sigma_min", c.density.sigma_min);
        rd.get("sigma_max", c.density.sigma_max);
        rd.finish();
    }
    if (const json* a = r.child("augment")) {
        Reader ra(*a, "augment.");
        ra.get("brightness", c.strong.brightness);
        ra.get("contrast", c.strong.contrast);
        ra.get("saturation", c.strong.saturation);
        ra.get("grayscale_p", c.strong.grayscale_p);
        ra.get("blur_p", c.strong.blur_p);
        ra.get("blur_sigma_min", c.strong.blur_sigma_min);
        ra.get("blur_sigma_max", c.strong.blur_sigma_max);
        ra.get("patch_size", c.strong.patch_size);
        ra.get("mask_ratio", c.strong.mask_ratio);
        ra.finish();
    }
    if (const json* i = r.child("inpaint")) {
        Reader ri(*i, "inpaint.");
        ri.get("backend", c.inpaint.backend);
        ri.get("url", c.inpaint.service.url);
        ri.get("timeout_seconds", c.inpaint.service.timeout_seconds);
        ri.get("retries", c.inpaint.service.retries);
        ri.get("blocking", c.inpaint.blocking);
        ri.get("workers", c.inpaint.workers);
        ri.get("slot_probability", c.inpaint.slot_probability);
        ri.finish();
    }
    if (const json* e = r.child("eval")) {
        Reader re(*e, "eval.");
        re.get("max_side", c.eval_max_side);
        re.get("every", c.eval_every);
        re.finish();
    }
    if (const json* d = r.child("data")) {
        Reader rd(*d, "data.");
        rd.get("train", c.train_data);
        rd.get("val", c.val_data);
        rd.finish();
    }
    r.get("out_dir", c.out_dir);
    r.finish();

    c.model.num_bins = c.bins().num_bins();
    c.loss.warmup_epochs = c.T_w;
    c.validate();
    return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return config_from_json(std::string(bytes.begin(), bytes.end()));
}

std::string config_digest(const TrainConfig& cfg) {
    json j = to_json(cfg);
    j.erase("epochs");
    j.erase("out_dir");
    return io::sha256_hex(j.dump());
}

}  // namespace tmtb
