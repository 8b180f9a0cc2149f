#include "tmtb/trainer.hpp"
#include "tmtb/io.hpp"
#include "tmtb/metrics.hpp"

#include <cereal/archives/binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tmtb {

using nlohmann::json;

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(const OptimizerConfig& cfg, Model& model) : cfg_(cfg) {
    for (auto& p : nn::parameter_list(model)) {
        if (!p.trainable) continue;
        m.push_back(Mat<float>::Zero(p.value->rows(), p.value->cols()));
        v.push_back(Mat<float>::Zero(p.value->rows(), p.value->cols()));
    }
}

void AdamW::step(Model& model, Model& grad) {
    auto params = nn::parameter_list(model);
    auto grads = nn::parameter_list(grad);
    require_shape(params.size() == grads.size(), "optimizer: gradient does not match the model");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto lr = static_cast<float>(cfg_.lr), wd = static_cast<float>(cfg_.weight_decay);
    const auto b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    const auto s1 = static_cast<float>(1.0 / bc1), s2 = static_cast<float>(1.0 / bc2), eps = static_cast<float>(cfg_.eps);
    std::size_t k = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        require(k < m.size(), "optimizer: state does not match the model");
        auto& theta = *params[i].value;
        const auto& g = *grads[i].value;
        theta *= 1.0f - lr * wd;  // decoupled decay
        m[k] = b1 * m[k] + (1.0f - b1) * g;
        v[k] = b2 * v[k] + (1.0f - b2) * g.cwiseAbs2();
        theta.array() -= lr * (m[k].array() * s1) / ((v[k].array() * s2).sqrt() + eps);
        ++k;
    }
}

// ---------------------------------------------------------------------------
// Evaluation

Image<float> resize_bilinear(const Image<float>& img, Index height, Index width) {
    require(height > 0 && width > 0, "resize: target must be non-empty");
    Image<float> out(img.channels(), height, width);
    const double sy = static_cast<double>(img.height) / height, sx = static_cast<double>(img.width) / width;
    for (Index y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        const Index y0 = static_cast<Index>(fy), y1 = std::min(y0 + 1, img.height - 1);
        const auto ty = static_cast<float>(fy - y0);
        for (Index x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            const Index x0 = static_cast<Index>(fx), x1 = std::min(x0 + 1, img.width - 1);
            const auto tx = static_cast<float>(fx - x0);
            out.values.col(y * width + x) =
                (1 - ty) * ((1 - tx) * img.values.col(y0 * img.width + x0) + tx * img.values.col(y0 * img.width + x1)) +
                ty * ((1 - tx) * img.values.col(y1 * img.width + x0) + tx * img.values.col(y1 * img.width + x1));
        }
    }
    return out;
}

Model::Output predict(const Model& model, const Image<float>& image, const ScanEngine& engine, Index max_side) {
    Image<float> img = image;
    const Index longest = std::max(img.height, img.width);
    if (longest > max_side) {
        const double s = static_cast<double>(max_side) / static_cast<double>(longest);
        img = resize_bilinear(img, std::max<Index>(1, std::lround(img.height * s)),
                              std::max<Index>(1, std::lround(img.width * s)));
    }
    const Index m = model.config.backbone.output_stride();
    const Index ph = (img.height + m - 1) / m * m, pw = (img.width + m - 1) / m * m;
    Image<float> padded(img.channels(), ph, pw);
    for (Index y = 0; y < img.height; ++y) padded.values.middleCols(y * pw, img.width) = img.values.middleCols(y * img.width, img.width);

    auto out = model.forward(padded, engine);
    const Index s = model.stride();
    const Index ch = (img.height + s - 1) / s, cw = (img.width + s - 1) / s;
    if (ch == out.density.height() && cw == out.density.width()) return out;
    Model::Output cropped;
    cropped.density = DensityMap<float>(Raster<float>(out.density.values.topLeftCorner(ch, cw)), s);
    cropped.probs = BinProbMap<float>(out.probs.channels(), ch, cw, s);
    for (Index y = 0; y < ch; ++y) cropped.probs.values.middleCols(y * cw, cw) = out.probs.values.middleCols(y * out.probs.width, cw);
    return cropped;
}

DensityMap<float> predict_density(const Model& model, const Image<float>& image, const ScanEngine& engine,
                                  Index max_side) {
    return predict(model, image, engine, max_side).density;
}

EvalResult evaluate(const std::function<double(const Sample&)>& count, const std::vector<Sample>& data) {
    require(!data.empty(), "evaluate: empty dataset");
    EvalResult r;
    for (const auto& s : data) {
        require(s.points.has_value(), "evaluate: sample " + s.id + " has no annotations");
        r.predicted.push_back(count(s));
        r.ground_truth.push_back(static_cast<double>(s.points->count()));
    }
    r.mae = mae(r.ground_truth, r.predicted);
    r.rmse = rmse(r.ground_truth, r.predicted);
    return r;
}

EvalResult evaluate(const Model& model, const std::vector<Sample>& data, const ScanEngine& engine, Index max_side) {
    return evaluate(
        [&](const Sample& s) {
            return predict_density(model, s.image, engine, max_side).values.cast<double>().sum();
        },
        data);
}

// ---------------------------------------------------------------------------

std::string EpochMetrics::to_json() const {
    json j = {{"epoch", epoch},
              {"step", step},
              {"loss", loss},
              {"reg", components.reg},
              {"cls", components.cls},
              {"unsup", components.unsup},
              {"inpaint", components.inpaint},
              {"lambda", lambda},
              {"omega", omega},
              {"inpainted_samples", inpainted_samples},
              {"inpaint_failures", inpaint_failures}};
    if (val_mae) j["val_mae"] = *val_mae;
    if (val_rmse) j["val_rmse"] = *val_rmse;
    return j.dump();
}

namespace {

EpochMetrics metrics_from_json(const std::string& s) {
    const json j = json::parse(s);
    EpochMetrics m;
    m.epoch = j.at("epoch");
    m.step = j.at("step");
    m.loss = j.at("loss");
    m.components = {j.at("reg"), j.at("cls"), j.at("unsup"), j.at("inpaint")};
    m.lambda = j.at("lambda");
    m.omega = j.at("omega").get<std::vector<double>>();
    m.inpainted_samples = j.at("inpainted_samples");
    m.inpaint_failures = j.at("inpaint_failures");
    if (j.contains("val_mae")) m.val_mae = j.at("val_mae").get<double>();
    if (j.contains("val_rmse")) m.val_rmse = j.at("val_rmse").get<double>();
    return m;
}

ModelConfig model_config(const TrainConfig& cfg) {
    ModelConfig mc = cfg.model;
    mc.num_bins = cfg.bins().num_bins();
    mc.seed = stream_seed({cfg.seed, 0x30DE1});
    return mc;
}

ScanEngine make_engine(const TrainConfig& cfg) {
    if (cfg.scan_backend != "native") return ScanEngine::reference();
    auto e = ScanEngine::load_native(cfg.scan_library);
    if (!e.is_native()) spdlog::warn("native scan unavailable ({}); using the reference scan", e.fallback_reason());
    return e;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    Rng rng(seed);
    std::shuffle(v.begin(), v.end(), rng);
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, const Dataset& train, std::vector<Sample> val)
    : cfg_(std::move(cfg)), bins_(cfg_.bins()), engine_(make_engine(cfg_)), val_(std::move(val)) {
    cfg_.model.num_bins = bins_.num_bins();
    cfg_.loss.warmup_epochs = cfg_.T_w;
    cfg_.validate();
    auto split = split_labeled(train, cfg_.labeled_fraction, cfg_.seed);
    labeled_ = std::move(split.labeled);
    unlabeled_ = std::move(split.unlabeled);
    require(cfg_.mode == TrainMode::supervised || !unlabeled_.empty(), "tmtb mode needs unlabeled images");
    student_ = Model(model_config(cfg_));
    teacher_ = student_;
    opt_ = AdamW(cfg_.optimizer, student_);
    rng_.seed(stream_seed({cfg_.seed, 0x7EA1}));
    if (cfg_.mode == TrainMode::tmtb) {
        store_ = std::make_unique<InpaintStore>(inpaint_dir());
        backend_ = make_backend(cfg_.inpaint.backend, cfg_.inpaint.service);
        pool_ = std::make_unique<InpaintWorkerPool>(backend_, *store_, cfg_.inpaint.workers);
    }
}

Trainer::~Trainer() = default;

std::filesystem::path Trainer::inpaint_dir() const { return std::filesystem::path(cfg_.out_dir) / "inpaint"; }

std::size_t Trainer::steps_per_epoch() const {
    if (cfg_.steps_per_epoch > 0) return static_cast<std::size_t>(cfg_.steps_per_epoch);
    const std::size_t pool = cfg_.mode == TrainMode::tmtb ? unlabeled_.size() : labeled_.size();
    const std::size_t per = cfg_.mode == TrainMode::tmtb ? static_cast<std::size_t>(cfg_.unlabeled_per_batch)
                                                         : static_cast<std::size_t>(cfg_.labeled_per_batch);
    return std::max<std::size_t>(1, (pool + per - 1) / per);
}

LabeledView Trainer::labeled_view(const Sample& s, Rng& rng) const {
    CropTargets t;
    t.points = *s.points;
    const auto v = paired_crop(s.image, t, cfg_.crop, cfg_.crop, cfg_.stride, cfg_.flip_p, rng);
    DensityOptions opts = cfg_.density;
    opts.stride = cfg_.stride;
    return {v.image, generate_density_map<float>(*v.targets.points, opts)};
}

UnlabeledView Trainer::unlabeled_view(const Image<float>& img, Rng& rng) const {
    const auto v = paired_crop(img, {}, cfg_.crop, cfg_.crop, cfg_.stride, cfg_.flip_p, rng);
    auto pair = make_pair(v.image, v.window, cfg_.strong, rng);
    return {std::move(pair.weak), std::move(pair.strong.image)};
}

StepMetrics Trainer::train_step(const std::vector<LabeledView>& labeled, const std::vector<UnlabeledView>& unlabeled,
                                const std::vector<UnlabeledView>& inpainted, int epoch) {
    require(!labeled.empty(), "train_step: no labeled samples");
    StepMetrics sm;
    sm.n_labeled = labeled.size();
    sm.n_unlabeled = unlabeled.size();
    sm.n_inpainted = inpainted.size();
    sm.lambda = warmup_weight(epoch, cfg_.T_w);
    const auto& w = cfg_.loss;

    Model grad = nn::zeros_like(student_);
    std::vector<Model::Cache> caches;
    caches.reserve(labeled.size() + unlabeled.size() + inpainted.size());

    const float nl = static_cast<float>(labeled.size());
    for (const auto& l : labeled) {
        auto& c = caches.emplace_back();
        const auto out = student_.forward(l.image, c, engine_);
        const auto mask = gt_foreground_mask(l.density, static_cast<float>(w.tau));
        const auto reg = loss_reg(out.density.values, l.density.values, mask, w);
        const auto cls = loss_cls(bin_index_map(l.density.values, bins_), out.probs);
        sm.components.reg += reg.value / nl;
        sm.components.cls += cls.value / nl;
        student_.backward(c, reg.grad * static_cast<float>(w.reg / nl), cls.grad * static_cast<float>(w.cls / nl), grad,
                          engine_);
    }

    if (!unlabeled.empty()) {
        const float nu = static_cast<float>(unlabeled.size());
        const float scale = static_cast<float>(sm.lambda * w.unsup) / nu;
        for (const auto& u : unlabeled) {
            const auto pseudo = teacher_.forward(u.weak, engine_);
            auto& c = caches.emplace_back();
            const auto out = student_.forward(u.strong, c, engine_);
            const auto loss = loss_consistency(out.density.values, pseudo.density.values, out.probs, pseudo.probs);
            sm.components.unsup += loss.value / nu;
            student_.backward(c, loss.grad_density * scale, loss.grad_probs * scale, grad, engine_);
        }
    }

    if (!inpainted.empty()) {
        const float ni = static_cast<float>(inpainted.size());
        const float scale = static_cast<float>(sm.lambda * w.inpaint) / ni;
        for (const auto& u : inpainted) {
            const auto pseudo = teacher_.forward(u.weak, engine_);
            const auto teacher_strong = teacher_.forward(u.strong, engine_);
            const auto levels = inconsistency_levels(teacher_strong.probs, pseudo.probs);
            const auto mask = weighted_mask<float>(levels, epoch, cfg_.L, cfg_.T_inpw);
            auto& c = caches.emplace_back();
            const auto out = student_.forward(u.strong, c, engine_);
            const auto loss = loss_inpaint(out.density.values, pseudo.density.values, out.probs, pseudo.probs, mask);
            sm.components.inpaint += loss.value / ni;
            student_.backward(c, loss.grad_density * scale, loss.grad_probs * scale, grad, engine_);
        }
    }

    // Throws (before any weight changes) if a component is not finite.
    const auto total = total_loss(sm.components, epoch, w);
    sm.total = total.value;

    // Running statistics track clean labeled crops only; strong and inpainted
    // views would skew them away from the inference distribution.
    for (std::size_t i = 0; i < labeled.size(); ++i) student_.update_norm_stats(caches[i]);
    opt_.step(student_, grad);
    ema_update(teacher_, student_, cfg_.ema_decay);
    ++step_;
    return sm;
}

bool Trainer::inpaint_refresh(int epoch) {
    if (cfg_.mode != TrainMode::tmtb || cfg_.T_inp <= 0 || epoch % cfg_.T_inp != 0) return false;
    const auto prompts = PromptStore::standard();
    for (std::size_t i = 0; i < unlabeled_.size(); ++i) {
        const auto& s = unlabeled_[i];
        const auto out = predict(teacher_, s.image, engine_, std::numeric_limits<Index>::max());
        InpaintJob job;
        job.source_id = s.id;
        job.image = s.image;
        job.mask = build_inpaint_mask(out.probs, s.image.height, s.image.width);
        job.prompt = sample_prompt(prompts, stream_seed({cfg_.seed, static_cast<std::uint64_t>(epoch), i, 0x9803}));
        job.seed = stream_seed({cfg_.seed, static_cast<std::uint64_t>(epoch), i, 0x1419});
        job.epoch = epoch;
        pool_->submit(std::move(job));
    }
    if (cfg_.inpaint.blocking) {
        pool_->wait_idle();
        reload_inpainted();
    }
    return true;
}

void Trainer::reload_inpainted() {
    if (store_) inpainted_ = store_->snapshot();
}

EpochMetrics Trainer::run_epoch(bool log) {
    const int e = epoch_;
    EpochMetrics em;
    em.epoch = e;
    if (cfg_.mode == TrainMode::tmtb) {
        const bool refreshed = inpaint_refresh(e);
        if (!cfg_.inpaint.blocking || (!refreshed && inpainted_.empty())) reload_inpainted();
    }

    const auto lab_order = shuffled(labeled_.size(), stream_seed({cfg_.seed, static_cast<std::uint64_t>(e), 0x1AB}));
    const auto unl_order = shuffled(unlabeled_.size(), stream_seed({cfg_.seed, static_cast<std::uint64_t>(e), 0x0B1}));
    std::size_t lab_cursor = 0, unl_cursor = 0;
    const std::size_t nl = static_cast<std::size_t>(cfg_.labeled_per_batch);
    const std::size_t nu = cfg_.mode == TrainMode::tmtb ? static_cast<std::size_t>(cfg_.unlabeled_per_batch) : 0;
    const std::size_t steps = steps_per_epoch();
    std::bernoulli_distribution take_inpainted(cfg_.inpaint.slot_probability);

    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<LabeledView> lab;
        std::vector<UnlabeledView> unl, inp;
        for (std::size_t i = 0; i < nl; ++i)
            lab.push_back(labeled_view(labeled_[lab_order[lab_cursor++ % labeled_.size()]], rng_));
        for (std::size_t j = 0; j < nu; ++j) {
            if (!inpainted_.empty() && take_inpainted(rng_)) {
                std::uniform_int_distribution<std::size_t> pick(0, inpainted_.size() - 1);
                inp.push_back(unlabeled_view(inpainted_[pick(rng_)].image, rng_));
            } else {
                unl.push_back(unlabeled_view(unlabeled_[unl_order[unl_cursor++ % unlabeled_.size()]].image, rng_));
            }
        }
        const auto sm = train_step(lab, unl, inp, e);
        em.loss += sm.total / static_cast<double>(steps);
        em.components.reg += sm.components.reg / static_cast<double>(steps);
        em.components.cls += sm.components.cls / static_cast<double>(steps);
        em.components.unsup += sm.components.unsup / static_cast<double>(steps);
        em.components.inpaint += sm.components.inpaint / static_cast<double>(steps);
        em.inpainted_samples += sm.n_inpainted;
    }
    em.step = step_;
    em.lambda = warmup_weight(e, cfg_.T_w);
    em.omega = level_weights(e, cfg_.L, cfg_.T_inpw);
    if (pool_) {
        const auto failures = pool_->failures();
        for (std::size_t i = seen_failures_; i < failures.size(); ++i) spdlog::warn("inpainting failed: {}", failures[i]);
        em.inpaint_failures = failures.size() - seen_failures_;
        seen_failures_ = failures.size();
    }

    ++epoch_;
    const bool last = epoch_ >= cfg_.epochs;
    if (!val_.empty() && cfg_.eval_every > 0 && (epoch_ % cfg_.eval_every == 0 || last)) {
        const auto r = evaluate(teacher_, val_, engine_, cfg_.eval_max_side);
        em.val_mae = r.mae;
        em.val_rmse = r.rmse;
    }
    history_.push_back(em);
    if (log) {
        std::filesystem::create_directories(cfg_.out_dir);
        std::ofstream out(std::filesystem::path(cfg_.out_dir) / "metrics.jsonl", std::ios::app);
        out << em.to_json() << '\n';
    }
    return em;
}

void Trainer::train(bool checkpoint, const std::function<void(const EpochMetrics&)>& on_epoch) {
    while (epoch_ < cfg_.epochs) {
        const auto em = run_epoch(true);
        spdlog::info("epoch {} step {} loss {:.5f} (reg {:.4f} cls {:.4f} unsup {:.4f} inp {:.4f}) lambda {:.4f}{}",
                     em.epoch, em.step, em.loss, em.components.reg, em.components.cls, em.components.unsup,
                     em.components.inpaint, em.lambda,
                     em.val_mae ? fmt::format(" val MAE {:.3f} RMSE {:.3f}", *em.val_mae, *em.val_rmse) : "");
        if (checkpoint) save_checkpoint(std::filesystem::path(cfg_.out_dir) / "checkpoint.bin");
        if (on_epoch) on_epoch(em);
    }
    if (pool_) pool_->wait_idle();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Blob {
    std::string name;
    std::int64_t rows = 0, cols = 0;
    std::vector<float> data;
    template <class A>
    void serialize(A& a) {
        a(name, rows, cols, data);
    }
};

struct CheckpointFile {
    std::uint32_t version = kCheckpointVersion;
    std::string digest;
    std::string config_json;
    std::int32_t epoch = 0;
    std::int64_t step = 0;
    std::vector<Blob> student, teacher, adam_m, adam_v;
    std::int64_t adam_t = 0;
    std::string rng_state;
    std::vector<std::string> history;
    template <class A>
    void serialize(A& a) {
        a(version, digest, config_json, epoch, step, student, teacher, adam_m, adam_v, adam_t, rng_state, history);
    }
};

Blob to_blob(const std::string& name, const Mat<float>& m) {
    return {name, m.rows(), m.cols(), std::vector<float>(m.data(), m.data() + m.size())};
}

void from_blob(const Blob& b, const std::string& name, Mat<float>& m) {
    require(b.name == name, "checkpoint: expected tensor " + name + ", found " + b.name);
    require(b.rows == m.rows() && b.cols == m.cols() && b.data.size() == static_cast<std::size_t>(m.size()),
            "checkpoint: tensor " + name + " has the wrong shape");
    std::copy(b.data.begin(), b.data.end(), m.data());
}

std::vector<Blob> dump_model(Model& model) {
    std::vector<Blob> out;
    for (auto& p : nn::parameter_list(model)) out.push_back(to_blob(p.name, *p.value));
    return out;
}

void restore_model(const std::vector<Blob>& blobs, Model& model) {
    auto params = nn::parameter_list(model);
    require(blobs.size() == params.size(), "checkpoint: parameter count does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) from_blob(blobs[i], params[i].name, *params[i].value);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    CheckpointFile f;
    try {
        cereal::BinaryInputArchive ar(in);
        ar(f.version);
        if (f.version != kCheckpointVersion)
            throw Error(path.string() + ": checkpoint format version " + std::to_string(f.version) + ", expected " +
                        std::to_string(kCheckpointVersion));
        in.seekg(0);
        cereal::BinaryInputArchive full(in);
        full(f);
    } catch (const cereal::Exception& e) {
        throw Error(path.string() + ": corrupt checkpoint: " + e.what());
    }
    return f;
}

}  // namespace

struct CheckpointAccess {
    static long long& t(AdamW& o) { return o.t_; }
    static long long t(const AdamW& o) { return o.t_; }
};

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    auto& self = const_cast<Trainer&>(*this);  // parameter_list needs mutable access; nothing is modified
    CheckpointFile f;
    f.digest = config_digest(cfg_);
    f.config_json = config_to_json(cfg_);
    f.epoch = epoch_;
    f.step = step_;
    f.student = dump_model(self.student_);
    f.teacher = dump_model(self.teacher_);
    for (std::size_t i = 0; i < opt_.m.size(); ++i) {
        f.adam_m.push_back(to_blob("m" + std::to_string(i), opt_.m[i]));
        f.adam_v.push_back(to_blob("v" + std::to_string(i), opt_.v[i]));
    }
    f.adam_t = CheckpointAccess::t(opt_);
    std::ostringstream rs;
    rs << rng_;
    f.rng_state = rs.str();
    for (const auto& h : history_) f.history.push_back(h.to_json());

    std::ostringstream out;
    {
        cereal::BinaryOutputArchive ar(out);
        ar(f);
    }
    io::write_file_atomic(path, out.str());
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
    const auto f = read_checkpoint(path);
    const auto digest = config_digest(cfg_);
    if (f.digest != digest)
        throw Error(path.string() + ": checkpoint was written with a different configuration (digest " +
                    f.digest.substr(0, 12) + ", current " + digest.substr(0, 12) + ")");
    restore_model(f.student, student_);
    restore_model(f.teacher, teacher_);
    require(f.adam_m.size() == opt_.m.size() && f.adam_v.size() == opt_.v.size(),
            "checkpoint: optimizer state does not match the model");
    for (std::size_t i = 0; i < opt_.m.size(); ++i) {
        from_blob(f.adam_m[i], "m" + std::to_string(i), opt_.m[i]);
        from_blob(f.adam_v[i], "v" + std::to_string(i), opt_.v[i]);
    }
    CheckpointAccess::t(opt_) = f.adam_t;
    std::istringstream rs(f.rng_state);
    rs >> rng_;
    require(!rs.fail(), "checkpoint: unreadable RNG state");
    epoch_ = f.epoch;
    step_ = f.step;
    history_.clear();
    for (const auto& h : f.history) history_.push_back(metrics_from_json(h));
    reload_inpainted();
}

TrainConfig checkpoint_config(const std::filesystem::path& path) {
    return config_from_json(read_checkpoint(path).config_json);
}

Model load_teacher(const std::filesystem::path& path) {
    const auto f = read_checkpoint(path);
    const auto cfg = config_from_json(f.config_json);
    Model m(model_config(cfg));
    restore_model(f.teacher, m);
    return m;
}

}  // namespace tmtb
