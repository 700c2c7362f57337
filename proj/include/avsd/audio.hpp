#pragma once

#include "avsd/nn/param_store.hpp"
#include "avsd/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avsd::audio {

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 44100.0;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Scales to max |sample| = 1; all-zero input stays silent.
Waveform normalize(Waveform w);

/// 16-bit PCM WAV. Multi-channel input is averaged to mono.
Waveform load_wav(const std::filesystem::path& path);
void save_wav(const Waveform& w, const std::filesystem::path& path);

/// Raw float text: optional first line "rate <hz>", then whitespace
/// separated samples.
Waveform load_waveform_text(const std::filesystem::path& path);

/// Dispatches on extension: .wav is PCM, anything else raw float text.
Waveform load_waveform(const std::filesystem::path& path);

// --------------------------------------------------------------------------- features

enum class Modality { audio, visual };
enum class FeatureSource { aclnet_standin, external_vggish, external_visual };

std::string_view modality_name(Modality m);
std::string_view source_name(FeatureSource s);

/// Time-major feature matrix (T x D) for one video track.
struct FeatureSequence {
    Modality modality = Modality::audio;
    FeatureSource source = FeatureSource::external_vggish;
    nn::Matrix frames;

    Eigen::Index length() const { return frames.rows(); }
    Eigen::Index width() const { return frames.cols(); }
};

// Feature file:
//   <modality> <T> <D> [<source>]
//   T lines of D floats
FeatureSequence parse_features(std::string_view text, std::string_view source_name = "<memory>");
FeatureSequence load_features(const std::filesystem::path& path);
void save_features(const FeatureSequence& f, const std::filesystem::path& path);

// --------------------------------------------------------------------------- synthetic benchmark

struct LabeledWaveform {
    Waveform wave;
    int label = 0;
};

struct SynthDataset {
    std::vector<std::string> class_names;
    std::vector<LabeledWaveform> train;
    std::vector<LabeledWaveform> test;
};

/// Class c draws from generator c % 5 (tone, chirp, noise, AM tone, tone
/// burst) in frequency band c / 5. Each class splits 80/20 train/test.
SynthDataset synth_dataset(std::size_t classes, std::size_t per_class, double duration_s, std::uint64_t rng_seed,
                           double sample_rate = 44100.0);

// --------------------------------------------------------------------------- classifier

struct ConvLayerSpec {
    Eigen::Index out_channels;
    Eigen::Index kernel;
    Eigen::Index stride;
};

struct AudioClassifierConfig {
    std::vector<ConvLayerSpec> layers = {{8, 64, 16}, {16, 16, 4}, {32, 8, 4}, {32, 8, 2}};
    std::size_t num_classes = 5;

    Eigen::Index embedding_dim() const { return layers.back().out_channels; }
    /// Shortest input that survives every layer.
    Eigen::Index min_input_length() const;
};

/// Strided 1-D conv stack (ReLU after each layer), global average pooling
/// and an affine head. The pooled vector is the exported embedding.
class AudioClassifier {
public:
    AudioClassifier(AudioClassifierConfig config, std::uint64_t rng_seed);

    const AudioClassifierConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    struct Output {
        nn::Vector embedding;
        nn::Vector logits;
    };

    Output forward(std::span<const double> samples) const;

    /// Cross-entropy for one example; accumulates parameter gradients.
    double loss_and_grad(std::span<const double> samples, int label);

    int predict(std::span<const double> samples) const;

    void save(const std::filesystem::path& path) const;
    static AudioClassifier load(const std::filesystem::path& path);

private:
    AudioClassifierConfig config_;
    nn::ParamStore params_;
};

struct AudioTrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    nn::AdamConfig adam{2e-3, 0.9, 0.999, 1e-8};
    double clip_norm = 5.0;
    std::uint64_t rng_seed = 7;
};

struct AudioTrainReport {
    double initial_loss = 0.0;             // mean train loss before any update
    std::vector<double> epoch_loss;        // mean train loss over each epoch
    double test_accuracy = 0.0;
};

AudioClassifier train_audio_clf(const SynthDataset& data, const AudioTrainOptions& options,
                                AudioTrainReport* report = nullptr,
                                const AudioClassifierConfig& config = AudioClassifierConfig{});

double accuracy(const AudioClassifier& clf, const std::vector<LabeledWaveform>& set);

/// Number of full windows of `window` samples taken every `hop` samples.
std::size_t window_count(std::size_t num_samples, std::size_t window, std::size_t hop);

/// One pooled embedding per window; source = aclnet_standin.
FeatureSequence embed_audio(const AudioClassifier& clf, const Waveform& wave, double window_s, double hop_s);

}  // namespace avsd::audio
