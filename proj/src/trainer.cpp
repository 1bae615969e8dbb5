#include "kinet/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "kinet/nn/checkpoint.hpp"
#include "kinet/nn/loss.hpp"
#include "kinet/random.hpp"

namespace kinet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 1) throw TrainingError("epochs must be at least 1");
    if (batch_size < 1) throw TrainingError("batch size must be at least 1");
    if (jobs < 1) throw TrainingError("jobs must be at least 1");
}

std::string metrics_header() { return "epoch,train_loss,train_acc,val_loss,val_acc,seconds"; }

std::string format_record(const EpochRecord& r) {
    std::ostringstream os;
    os.precision(17);
    os << r.epoch << "," << r.train_loss << "," << r.train_acc << "," << r.val_loss << "," << r.val_acc << ","
       << r.seconds;
    return os.str();
}

EpochRecord parse_record(const std::string& line) {
    std::istringstream is(line);
    EpochRecord r;
    char c[5];
    if (!(is >> r.epoch >> c[0] >> r.train_loss >> c[1] >> r.train_acc >> c[2] >> r.val_loss >> c[3] >> r.val_acc >>
          c[4] >> r.seconds))
        throw TrainingError("malformed metrics record: " + line);
    for (char x : c) {
        if (x != ',') throw TrainingError("malformed metrics record: " + line);
    }
    return r;
}

std::vector<EpochRecord> read_metrics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw TrainingError("cannot read metrics " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != metrics_header()) throw TrainingError(path.string() + ": missing header");
    std::vector<EpochRecord> out;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(parse_record(line));
    }
    return out;
}

fs::path checkpoint_path(const fs::path& dir, int epoch) { return dir / ("epoch_" + std::to_string(epoch) + ".knck"); }

fs::path optimizer_path(const fs::path& checkpoint) {
    fs::path p = checkpoint;
    p.replace_extension(".opt");
    return p;
}

TrainState initial_state(const nn::NetworkSpec& spec, const TrainConfig& cfg) {
    TrainState s;
    s.init_seed = mix_keys({cfg.seed, 0x696e6974});
    s.model = nn::build_model<float>(spec, s.init_seed);
    s.optimizer = nn::AdamState(s.model, cfg.adam);
    return s;
}

TrainState resume_state(const fs::path& checkpoint, const TrainConfig& cfg, bool* exact) {
    nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
    TrainState s;
    s.model = std::move(ck.model);
    s.epoch = static_cast<int>(ck.epoch);
    s.init_seed = ck.init.seed;
    const fs::path opt = optimizer_path(checkpoint);
    if (fs::exists(opt)) {
        s.optimizer = nn::load_optimizer(opt);
        nn::check_optimizer_matches(s.optimizer, s.model);
        if (exact) *exact = true;
    } else {
        s.optimizer = nn::AdamState(s.model, cfg.adam);
        if (exact) *exact = false;
    }
    return s;
}

namespace {

double sample_loss(int label, double p) { return nn::bce_term(label, p); }

}  // namespace

EvalResult evaluate(const nn::Model<float>& model, const std::vector<const ImageSample*>& samples, int jobs) {
    if (samples.empty()) throw TrainingError("empty split");
    EvalResult r;
    r.predictions.resize(samples.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < samples.size();) {
            try {
                const auto cache = nn::forward(model, load_batch({samples[i]}));
                r.predictions[i] = {samples[i], cache.probs[0], nn::predicted_class(cache.probs[0])};
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                next = samples.size();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(samples.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    // Reduce in manifest order so the result does not depend on `jobs`.
    double loss = 0.0;
    std::size_t correct = 0;
    for (const Prediction& p : r.predictions) {
        loss += sample_loss(p.sample->label, p.probability);
        correct += p.predicted == p.sample->label;
    }
    r.loss = loss / static_cast<double>(samples.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return r;
}

EvalResult evaluate(const nn::Model<float>& model, const Manifest& manifest, Split split, int jobs) {
    const auto samples = manifest.split(split);
    if (samples.empty()) throw TrainingError("empty split: " + to_string(split));
    return evaluate(model, samples, jobs);
}

std::vector<EpochRecord> train(TrainState& state, const Manifest& manifest, const TrainConfig& cfg,
                               const EpochCallback& on_epoch) {
    cfg.validate();
    if (manifest.count(Split::Train) == 0) throw TrainingError("manifest has no train samples");
    if (manifest.count(Split::Val) == 0) throw TrainingError("manifest has no val samples");
    if (!cfg.checkpoint_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.checkpoint_dir, ec);
        if (ec) throw TrainingError("cannot create " + cfg.checkpoint_dir.string() + ": " + ec.message());
    }
    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        const bool fresh = state.epoch == 0 || !fs::exists(cfg.metrics_path);
        if (cfg.metrics_path.has_parent_path()) fs::create_directories(cfg.metrics_path.parent_path());
        metrics.open(cfg.metrics_path, fresh ? std::ios::trunc : std::ios::app);
        if (!metrics) throw TrainingError("cannot open metrics file " + cfg.metrics_path.string());
        if (fresh) metrics << metrics_header() << "\n" << std::flush;
    }

    std::vector<EpochRecord> records;
    for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        BatchStream stream(manifest, Split::Train, cfg.batch_size,
                           mix_keys({cfg.seed, static_cast<std::uint64_t>(epoch), 0x73687566}));
        nn::Tensor4<float> images;
        std::vector<int> labels;
        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        while (stream.next(images, labels)) {
            const std::size_t batch = stream.batch_index();
            nn::ForwardOptions fopt;
            fopt.training = true;
            fopt.dropout_key = mix_keys({cfg.seed, static_cast<std::uint64_t>(epoch), batch});
            const auto cache = nn::forward(state.model, std::move(images), fopt);
            const nn::LossResult lr = nn::bce_loss(labels, cache.probs);
            if (!std::isfinite(lr.loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch));
            loss_sum += lr.loss * static_cast<double>(labels.size());
            for (std::size_t i = 0; i < labels.size(); ++i) correct += nn::predicted_class(cache.probs[i]) == labels[i];
            seen += labels.size();
            const auto back = nn::backward(state.model, cache, nn::bce_logit_gradients(labels, cache.probs));
            for (const auto& g : back.grads) {
                if (!nn::all_finite(std::span<const double>(g)))
                    throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(batch));
            }
            nn::adam_step(state.optimizer, state.model.arrays(), back.grads);
        }
        const EvalResult val = evaluate(state.model, manifest, Split::Val, cfg.jobs);
        state.epoch = epoch;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        rec.val_loss = val.loss;
        rec.val_acc = val.accuracy;
        if (cfg.record_timing)
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        if (!cfg.checkpoint_dir.empty()) {
            const fs::path ck = checkpoint_path(cfg.checkpoint_dir, epoch);
            nn::save_checkpoint({state.model, static_cast<std::uint32_t>(epoch), {1, state.init_seed}}, ck);
            nn::save_optimizer(state.optimizer, optimizer_path(ck));
        }
        if (metrics.is_open()) {
            metrics << format_record(rec) << "\n" << std::flush;
            if (!metrics) throw TrainingError("write failed: " + cfg.metrics_path.string());
        }
        records.push_back(rec);
        if (on_epoch && !on_epoch(rec, state.model)) break;
    }
    return records;
}

}  // namespace kinet
