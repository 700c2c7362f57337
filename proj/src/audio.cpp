#include "avsd/audio.hpp"

#include "avsd/error.hpp"
#include "avsd/nn/layers.hpp"
#include "avsd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace avsd::audio {

using nn::Matrix;
using nn::Vector;

Waveform normalize(Waveform w) {
    double peak = 0.0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.0) {
        for (double& s : w.samples) s /= peak;
    }
    return w;
}

// --------------------------------------------------------------------------- WAV / text

namespace {

template <class T>
T read_le(std::istream& in) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) {
        throw DataError("truncated WAV file");
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<T>(v);
}

template <class T>
void write_le(std::ostream& out, T value) {
    auto v = static_cast<std::uint64_t>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file: " + path.string());
    char tag[4];
    auto expect = [&](const char* want) {
        if (!in.read(tag, 4) || std::memcmp(tag, want, 4) != 0) {
            throw DataError(path.string() + ": not a RIFF/WAVE file");
        }
    };
    expect("RIFF");
    read_le<std::uint32_t>(in);
    expect("WAVE");
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    while (in.read(tag, 4)) {
        const auto size = read_le<std::uint32_t>(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_le<std::uint16_t>(in);
            channels = read_le<std::uint16_t>(in);
            rate = read_le<std::uint32_t>(in);
            read_le<std::uint32_t>(in);
            read_le<std::uint16_t>(in);
            bits = read_le<std::uint16_t>(in);
            in.seekg(static_cast<std::streamoff>(size) - 16, std::ios::cur);
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (format != 1 || bits != 16 || channels == 0) {
                throw DataError(path.string() + ": only 16-bit PCM WAV is supported");
            }
            const std::size_t frames = size / (2u * channels);
            Waveform w;
            w.sample_rate = rate;
            w.samples.resize(frames);
            for (std::size_t f = 0; f < frames; ++f) {
                double acc = 0.0;
                for (std::uint16_t c = 0; c < channels; ++c) {
                    acc += static_cast<double>(static_cast<std::int16_t>(read_le<std::uint16_t>(in))) / 32768.0;
                }
                w.samples[f] = acc / channels;
            }
            return w;
        } else {
            in.seekg(size + (size & 1u), std::ios::cur);
        }
    }
    throw DataError(path.string() + ": no data chunk");
}

void save_wav(const Waveform& w, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write WAV file: " + path.string());
    const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
    const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
    out.write("RIFF", 4);
    write_le<std::uint32_t>(out, 36 + data_bytes);
    out.write("WAVEfmt ", 8);
    write_le<std::uint32_t>(out, 16);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint32_t>(out, rate);
    write_le<std::uint32_t>(out, rate * 2);
    write_le<std::uint16_t>(out, 2);
    write_le<std::uint16_t>(out, 16);
    out.write("data", 4);
    write_le<std::uint32_t>(out, data_bytes);
    for (double s : w.samples) {
        const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clamped * 32768.0))));
    }
}

Waveform load_waveform_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open waveform file: " + path.string());
    Waveform w;
    std::string tok;
    bool first = true;
    while (in >> tok) {
        if (first && tok == "rate") {
            if (!(in >> tok)) throw DataError(path.string() + ": missing sample rate");
            w.sample_rate = nn::parse_double(tok);
            if (!(w.sample_rate > 0.0)) throw DataError(path.string() + ": sample rate must be positive");
            first = false;
            continue;
        }
        first = false;
        w.samples.push_back(nn::parse_double(tok));
    }
    return w;
}

Waveform load_waveform(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".wav" ? load_wav(path) : load_waveform_text(path);
}

// --------------------------------------------------------------------------- feature files

std::string_view modality_name(Modality m) {
    return m == Modality::audio ? "audio" : "visual";
}

std::string_view source_name(FeatureSource s) {
    switch (s) {
        case FeatureSource::aclnet_standin: return "aclnet_standin";
        case FeatureSource::external_vggish: return "external_vggish";
        case FeatureSource::external_visual: return "external_visual";
    }
    return "?";
}

FeatureSequence parse_features(std::string_view text, std::string_view source) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) -> DataError {
        return DataError(std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    std::istringstream header(line);
    std::string modality;
    long rows = 0;
    long cols = 0;
    if (!(header >> modality >> rows >> cols)) throw fail("expected header '<modality> <T> <D>'");
    FeatureSequence f;
    if (modality == "audio") {
        f.modality = Modality::audio;
        f.source = FeatureSource::external_vggish;
    } else if (modality == "visual") {
        f.modality = Modality::visual;
        f.source = FeatureSource::external_visual;
    } else {
        throw fail("unknown modality '" + modality + "'");
    }
    std::string src;
    if (header >> src) {
        bool known = false;
        for (auto s : {FeatureSource::aclnet_standin, FeatureSource::external_vggish, FeatureSource::external_visual}) {
            if (source_name(s) == src) {
                f.source = s;
                known = true;
            }
        }
        if (!known) throw fail("unknown feature source '" + src + "'");
    }
    if (rows < 1 || cols < 1) throw fail("T and D must be positive");
    f.frames.resize(rows, cols);
    for (long r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) {
            ++line_no;
            throw fail("expected " + std::to_string(rows) + " frame rows, found " + std::to_string(r));
        }
        ++line_no;
        std::istringstream row(line);
        std::string tok;
        long c = 0;
        while (row >> tok) {
            if (c >= cols) throw fail("row has more than " + std::to_string(cols) + " values");
            try {
                f.frames(r, c) = nn::parse_double(tok);
            } catch (const DataError&) {
                throw fail("invalid number '" + tok + "'");
            }
            ++c;
        }
        if (c != cols) {
            throw fail("row has " + std::to_string(c) + " values, expected " + std::to_string(cols));
        }
    }
    if (!f.frames.allFinite()) throw fail("non-finite feature value");
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw fail("unexpected extra row");
    }
    return f;
}

FeatureSequence load_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_features(buf.str(), path.string());
}

void save_features(const FeatureSequence& f, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write feature file: " + path.string());
    out << modality_name(f.modality) << ' ' << f.length() << ' ' << f.width() << ' ' << source_name(f.source) << '\n';
    for (Eigen::Index r = 0; r < f.length(); ++r) {
        for (Eigen::Index c = 0; c < f.width(); ++c) {
            if (c != 0) out << ' ';
            out << nn::format_double(f.frames(r, c));
        }
        out << '\n';
    }
}

// --------------------------------------------------------------------------- synthetic data

namespace {

constexpr const char* kGeneratorNames[] = {"tone", "chirp", "noise", "am_tone", "tone_burst"};

Waveform synthesize(std::size_t cls, std::size_t n, double rate, Rng& rng) {
    const std::size_t kind = cls % 5;
    const double band = 1.0 + 0.5 * static_cast<double>(cls / 5);
    Waveform w;
    w.sample_rate = rate;
    w.samples.assign(n, 0.0);
    const double two_pi = 2.0 * std::numbers::pi;
    const double phase = rng.uniform(0.0, two_pi);
    const double f0 = band * rng.uniform(300.0, 600.0);
    switch (kind) {
        case 0:
            for (std::size_t i = 0; i < n; ++i) w.samples[i] = std::sin(two_pi * f0 * i / rate + phase);
            break;
        case 1: {
            const double start = band * rng.uniform(800.0, 1200.0);
            const double stop = band * rng.uniform(3000.0, 4000.0);
            const double dur = static_cast<double>(n) / rate;
            for (std::size_t i = 0; i < n; ++i) {
                const double t = i / rate;
                w.samples[i] = std::sin(two_pi * (start * t + 0.5 * (stop - start) / dur * t * t) + phase);
            }
            break;
        }
        case 2:
            for (std::size_t i = 0; i < n; ++i) w.samples[i] = rng.uniform(-1.0, 1.0);
            break;
        case 3: {
            const double fm = rng.uniform(8.0, 16.0);
            const double mphase = rng.uniform(0.0, two_pi);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = i / rate;
                w.samples[i] = 0.5 * (1.0 + std::sin(two_pi * fm * t + mphase)) * std::sin(two_pi * f0 * t + phase);
            }
            break;
        }
        default: {
            const double period = rng.uniform(0.15, 0.25);
            const double length = rng.uniform(0.03, 0.05);
            const double offset = rng.uniform(0.0, period);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = i / rate;
                const double pos = std::fmod(t + offset, period);
                if (pos < length) w.samples[i] = std::sin(two_pi * f0 * t + phase);
            }
            break;
        }
    }
    // Low-level background jitter keeps every class from being noise-free.
    for (double& s : w.samples) s += rng.uniform(-0.02, 0.02);
    return normalize(std::move(w));
}

}  // namespace

SynthDataset synth_dataset(std::size_t classes, std::size_t per_class, double duration_s, std::uint64_t rng_seed,
                           double sample_rate) {
    if (classes < 2) throw UsageError("synth_dataset needs at least 2 classes");
    if (!(duration_s > 0.0) || !(sample_rate > 0.0)) throw UsageError("duration and sample rate must be positive");
    const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
    SynthDataset ds;
    const std::size_t test_per_class = per_class / 5;
    for (std::size_t c = 0; c < classes; ++c) {
        std::string name = kGeneratorNames[c % 5];
        if (c >= 5) name += "_band" + std::to_string(c / 5);
        ds.class_names.push_back(name);
        Rng rng(derive_seed(rng_seed, c));
        for (std::size_t i = 0; i < per_class; ++i) {
            LabeledWaveform lw{synthesize(c, n, sample_rate, rng), static_cast<int>(c)};
            (i < per_class - test_per_class ? ds.train : ds.test).push_back(std::move(lw));
        }
    }
    return ds;
}

// --------------------------------------------------------------------------- classifier

Eigen::Index AudioClassifierConfig::min_input_length() const {
    Eigen::Index len = 1;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        len = (len - 1) * it->stride + it->kernel;
    }
    return len;
}

namespace {

std::string layer_name(std::size_t i, const char* part) {
    return "conv" + std::to_string(i) + "." + part;
}

nn::Conv1dShape layer_shape(const AudioClassifierConfig& cfg, std::size_t i) {
    const Eigen::Index in = i == 0 ? 1 : cfg.layers[i - 1].out_channels;
    return {in, cfg.layers[i].out_channels, cfg.layers[i].kernel, cfg.layers[i].stride};
}

struct ForwardTrace {
    std::vector<nn::Conv1dCache> caches;
    std::vector<Matrix> activations;  // post-ReLU outputs per layer
    Vector pooled;
    Vector logits;
};

ForwardTrace run_forward(const AudioClassifierConfig& cfg, const nn::ParamStore& params,
                         std::span<const double> samples, bool keep) {
    if (static_cast<Eigen::Index>(samples.size()) < cfg.min_input_length()) {
        throw UsageError("waveform of " + std::to_string(samples.size()) + " samples is shorter than the " +
                         std::to_string(cfg.min_input_length()) + "-sample receptive field");
    }
    ForwardTrace tr;
    Matrix x = Eigen::Map<const Matrix>(samples.data(), 1, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        nn::Conv1dCache cache;
        Matrix y = nn::conv1d_forward(layer_shape(cfg, i), params.value(layer_name(i, "weight")),
                                      params.value(layer_name(i, "bias")), x, keep ? &cache : nullptr);
        y = y.cwiseMax(0.0);
        if (keep) {
            tr.caches.push_back(std::move(cache));
            tr.activations.push_back(y);
        }
        x = std::move(y);
    }
    tr.pooled = x.rowwise().mean();
    tr.logits = nn::affine(params.value("head.weight"), params.value("head.bias"), tr.pooled);
    return tr;
}

}  // namespace

AudioClassifier::AudioClassifier(AudioClassifierConfig config, std::uint64_t rng_seed) : config_(std::move(config)) {
    if (config_.layers.empty()) throw UsageError("audio classifier needs at least one conv layer");
    if (config_.num_classes < 2) throw UsageError("audio classifier needs at least 2 classes");
    Rng rng(rng_seed);
    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        const auto shape = layer_shape(config_, i);
        Matrix& w = params_.add(layer_name(i, "weight"), shape.out_channels, shape.in_channels * shape.kernel);
        nn::init_uniform(w, std::sqrt(6.0 / static_cast<double>(shape.in_channels * shape.kernel)), rng);
        params_.add(layer_name(i, "bias"), shape.out_channels, 1);
    }
    Matrix& head = params_.add("head.weight", static_cast<Eigen::Index>(config_.num_classes), config_.embedding_dim());
    nn::init_uniform(head, std::sqrt(6.0 / static_cast<double>(config_.embedding_dim())), rng);
    params_.add("head.bias", static_cast<Eigen::Index>(config_.num_classes), 1);
}

AudioClassifier::Output AudioClassifier::forward(std::span<const double> samples) const {
    ForwardTrace tr = run_forward(config_, params_, samples, false);
    return {std::move(tr.pooled), std::move(tr.logits)};
}

int AudioClassifier::predict(std::span<const double> samples) const {
    const Vector logits = forward(samples).logits;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
}

double AudioClassifier::loss_and_grad(std::span<const double> samples, int label) {
    ForwardTrace tr = run_forward(config_, params_, samples, true);
    const nn::XentResult xent = nn::softmax_xent(tr.logits, label);
    Vector d_pooled;
    nn::affine_backward(params_.value("head.weight"), tr.pooled, xent.grad, params_.grad("head.weight"),
                        params_.grad("head.bias"), &d_pooled);
    // Global average pooling spreads the gradient evenly over time.
    const Matrix& last = tr.activations.back();
    Matrix d_act = (d_pooled / static_cast<double>(last.cols())).replicate(1, last.cols());
    for (std::size_t i = config_.layers.size(); i-- > 0;) {
        d_act = d_act.cwiseProduct((tr.activations[i].array() > 0.0).cast<double>().matrix());
        Matrix d_in;
        nn::conv1d_backward(layer_shape(config_, i), params_.value(layer_name(i, "weight")), tr.caches[i], d_act,
                            params_.grad(layer_name(i, "weight")), params_.grad(layer_name(i, "bias")),
                            i == 0 ? nullptr : &d_in);
        d_act = std::move(d_in);
    }
    return xent.loss;
}

void AudioClassifier::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write audio classifier: " + path.string());
    out << "avsd-audio-classifier 1\nclasses " << config_.num_classes << "\nlayers " << config_.layers.size() << '\n';
    for (const auto& l : config_.layers) {
        out << "layer " << l.out_channels << ' ' << l.kernel << ' ' << l.stride << '\n';
    }
    nn::write_params(out, params_, false);
}

AudioClassifier AudioClassifier::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open audio classifier: " + path.string());
    std::string magic;
    int version = 0;
    std::string key;
    AudioClassifierConfig cfg;
    std::size_t n_layers = 0;
    if (!(in >> magic >> version) || magic != "avsd-audio-classifier" || version != 1) {
        throw DataError(path.string() + ": not an audio classifier file (version 1)");
    }
    if (!(in >> key >> cfg.num_classes) || key != "classes" || !(in >> key >> n_layers) || key != "layers") {
        throw DataError(path.string() + ": malformed header");
    }
    cfg.layers.clear();
    for (std::size_t i = 0; i < n_layers; ++i) {
        ConvLayerSpec l{};
        if (!(in >> key >> l.out_channels >> l.kernel >> l.stride) || key != "layer") {
            throw DataError(path.string() + ": malformed layer line " + std::to_string(i));
        }
        cfg.layers.push_back(l);
    }
    AudioClassifier clf(cfg, 0);
    nn::read_params(in, clf.params_);
    return clf;
}

double accuracy(const AudioClassifier& clf, const std::vector<LabeledWaveform>& set) {
    if (set.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : set) {
        correct += clf.predict(ex.wave.samples) == ex.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

AudioClassifier train_audio_clf(const SynthDataset& data, const AudioTrainOptions& options,
                                AudioTrainReport* report, const AudioClassifierConfig& config) {
    std::vector<int> seen(std::max<std::size_t>(data.class_names.size(), 1), 0);
    std::size_t distinct = 0;
    for (const auto& ex : data.train) {
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= seen.size()) {
            throw DataError("training label out of range: " + std::to_string(ex.label));
        }
        if (seen[static_cast<std::size_t>(ex.label)]++ == 0) ++distinct;
    }
    if (distinct < 2) throw UsageError("audio classifier training needs at least 2 classes present");

    AudioClassifierConfig cfg = config;
    cfg.num_classes = data.class_names.size();
    AudioClassifier clf(cfg, options.rng_seed);
    Rng rng(derive_seed(options.rng_seed, 1));

    AudioTrainReport local;
    AudioTrainReport& rep = report != nullptr ? *report : local;
    {
        double total = 0.0;
        for (const auto& ex : data.train) {
            total += nn::softmax_xent(clf.forward(ex.wave.samples).logits, ex.label).loss;
        }
        rep.initial_loss = total / static_cast<double>(data.train.size());
    }

    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            clf.params().zero_grad();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = data.train[order[i]];
                batch_loss += clf.loss_and_grad(ex.wave.samples, ex.label);
            }
            if (!std::isfinite(batch_loss)) {
                throw NumericError("audio classifier diverged (non-finite loss) in epoch " + std::to_string(epoch));
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& p : clf.params().params()) p.grad *= scale;
            clf.params().clip_grad_norm(options.clip_norm);
            nn::adam_step(clf.params(), options.adam);
            epoch_loss += batch_loss;
        }
        rep.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    rep.test_accuracy = accuracy(clf, data.test);
    return clf;
}

std::size_t window_count(std::size_t num_samples, std::size_t window, std::size_t hop) {
    if (window == 0 || hop == 0 || num_samples < window) return 0;
    return (num_samples - window) / hop + 1;
}

FeatureSequence embed_audio(const AudioClassifier& clf, const Waveform& wave, double window_s, double hop_s) {
    if (!(window_s > 0.0) || !(hop_s > 0.0)) throw UsageError("window and hop must be positive");
    const auto window = static_cast<std::size_t>(std::llround(window_s * wave.sample_rate));
    const auto hop = static_cast<std::size_t>(std::llround(hop_s * wave.sample_rate));
    const std::size_t count = window_count(wave.samples.size(), window, hop);
    if (count == 0) {
        throw DataError("waveform of " + std::to_string(wave.samples.size()) + " samples is shorter than one " +
                        std::to_string(window) + "-sample window");
    }
    FeatureSequence f;
    f.modality = Modality::audio;
    f.source = FeatureSource::aclnet_standin;
    f.frames.resize(static_cast<Eigen::Index>(count), clf.config().embedding_dim());
    const std::span<const double> all(wave.samples);
    for (std::size_t t = 0; t < count; ++t) {
        f.frames.row(static_cast<Eigen::Index>(t)) = clf.forward(all.subspan(t * hop, window)).embedding.transpose();
    }
    return f;
}

}  // namespace avsd::audio
