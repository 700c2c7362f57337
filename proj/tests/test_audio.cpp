#include "doctest.h"

#include "avsd/audio.hpp"
#include "avsd/error.hpp"
#include "oracles/windows.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace avsd;
using namespace avsd::audio;
namespace fs = std::filesystem;
using oracle::enumerate_windows;

namespace {

double max_abs(const std::vector<double>& s) {
    double m = 0.0;
    for (double v : s) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

TEST_CASE("synthetic dataset shape, normalization and determinism") {
    const auto a = synth_dataset(5, 40, 0.1, 3);
    CHECK(a.class_names.size() == 5);
    CHECK(a.train.size() == 160);
    CHECK(a.test.size() == 40);
    std::vector<int> per_class(5, 0);
    for (const auto* set : {&a.train, &a.test}) {
        for (const auto& ex : *set) {
            CHECK(std::abs(max_abs(ex.wave.samples) - 1.0) < 1e-9);
            CHECK(ex.wave.sample_rate == 44100.0);
            CHECK(ex.wave.samples.size() == 4410);
            ++per_class[static_cast<std::size_t>(ex.label)];
        }
    }
    for (int c : per_class) CHECK(c == 40);
    const auto b = synth_dataset(5, 40, 0.1, 3);
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].wave.samples == b.train[i].wave.samples);
    CHECK(synth_dataset(5, 40, 0.1, 4).train[0].wave.samples != a.train[0].wave.samples);
    CHECK_THROWS_AS(synth_dataset(1, 10, 0.1, 1), UsageError);
}

TEST_CASE("normalize") {
    Waveform w{{0.0, -4.0, 2.0}, 8000.0};
    const auto n = normalize(w);
    CHECK(n.samples == std::vector<double>{0.0, -1.0, 0.5});
    const auto silent = normalize(Waveform{{0.0, 0.0}, 8000.0});
    CHECK(silent.samples == std::vector<double>{0.0, 0.0});
}

TEST_CASE("classifier trains on the five-class benchmark") {
    const auto data = synth_dataset(5, 40, 0.5, 1);
    AudioTrainReport rep;
    AudioTrainOptions opt;
    const auto clf = train_audio_clf(data, opt, &rep);
    MESSAGE("initial " << rep.initial_loss << " epoch1 " << rep.epoch_loss.front() << " accuracy "
                       << rep.test_accuracy);
    CHECK(rep.epoch_loss.size() == 30);
    CHECK(std::abs(rep.initial_loss - std::log(5.0)) < 0.5);
    CHECK(rep.epoch_loss.front() < rep.initial_loss);
    CHECK(rep.test_accuracy >= 0.9);
    CHECK(accuracy(clf, data.test) == rep.test_accuracy);
}

TEST_CASE("single-class data is rejected") {
    auto data = synth_dataset(2, 5, 0.05, 1);
    for (auto& ex : data.train) ex.label = 0;
    AudioTrainOptions opt;
    opt.epochs = 1;
    CHECK_THROWS_AS(train_audio_clf(data, opt, nullptr, {{{4, 16, 4}}, 2}), UsageError);
}

TEST_CASE("window counts match enumeration") {
    CHECK(window_count(44100, 44100, 44100) == 1);
    CHECK(window_count(154350, 44100, 22050) == 6);
    CHECK(enumerate_windows(154350, 44100, 22050) == 6);
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = rng.index(300), w = 1 + rng.index(60), h = 1 + rng.index(40);
        CHECK(window_count(n, w, h) == enumerate_windows(n, w, h));
    }
}

TEST_CASE("embed_audio windowing, silence and determinism") {
    AudioClassifierConfig cfg{{{4, 32, 8}, {6, 8, 2}}, 5};
    const AudioClassifier clf(cfg, 3);
    Waveform one{std::vector<double>(44100, 0.0), 44100.0};
    for (std::size_t i = 0; i < one.samples.size(); ++i) one.samples[i] = std::sin(0.01 * static_cast<double>(i));
    const auto f1 = embed_audio(clf, one, 1.0, 1.0);
    CHECK(f1.length() == 1);
    CHECK(f1.width() == 6);
    CHECK(f1.source == FeatureSource::aclnet_standin);

    Waveform longer{std::vector<double>(154350, 0.0), 44100.0};
    const auto silent = embed_audio(clf, longer, 1.0, 0.5);
    CHECK(silent.length() == 6);
    for (Eigen::Index t = 1; t < silent.length(); ++t) {
        CHECK((silent.frames.row(t).array() == silent.frames.row(0).array()).all());
    }

    const auto again = embed_audio(clf, one, 1.0, 1.0);
    CHECK((again.frames.array() == f1.frames.array()).all());

    CHECK_THROWS_AS(embed_audio(clf, Waveform{std::vector<double>(100, 0.0), 44100.0}, 1.0, 1.0), DataError);
}

TEST_CASE("feature files") {
    std::ostringstream text;
    text << "audio 4 128\n";
    Rng rng(8);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 128; ++c) text << (c ? " " : "") << rng.uniform(-1, 1);
        text << "\n";
    }
    const auto f = parse_features(text.str());
    CHECK(f.length() == 4);
    CHECK(f.width() == 128);
    CHECK(f.modality == Modality::audio);

    std::ostringstream bad;
    bad << "audio 2 128\n";
    for (int c = 0; c < 128; ++c) bad << (c ? " " : "") << 0.5;
    bad << "\n";
    for (int c = 0; c < 127; ++c) bad << (c ? " " : "") << 0.5;
    bad << "\n";
    CHECK_THROWS_WITH_AS(parse_features(bad.str(), "f.feat"), doctest::Contains("f.feat:3"), DataError);
    CHECK_THROWS_AS(parse_features("audio 1 2\n1 nan\n"), DataError);
    CHECK_THROWS_AS(parse_features("smell 1 1\n1\n"), DataError);

    FeatureSequence v;
    v.modality = Modality::visual;
    v.source = FeatureSource::external_visual;
    v.frames.resize(3, 5);
    for (Eigen::Index i = 0; i < v.frames.size(); ++i) v.frames.data()[i] = rng.normal() * 1e3;
    const fs::path path = fs::temp_directory_path() / "avsd_feat_roundtrip.feat";
    save_features(v, path);
    const auto back = load_features(path);
    CHECK(back.modality == Modality::visual);
    CHECK(back.source == FeatureSource::external_visual);
    CHECK((back.frames - v.frames).cwiseAbs().maxCoeff() <= 1e-12);
    fs::remove(path);
}

TEST_CASE("waveform files") {
    const fs::path dir = fs::temp_directory_path() / "avsd_wave_test";
    fs::create_directories(dir);
    Waveform w{{0.0, 0.5, -1.0, 0.25}, 16000.0};
    save_wav(w, dir / "a.wav");
    const auto back = load_wav(dir / "a.wav");
    CHECK(back.sample_rate == 16000.0);
    REQUIRE(back.samples.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(back.samples[i] - w.samples[i]) < 1.0 / 32767);
    {
        std::ofstream t(dir / "b.txt");
        t << "rate 8000\n0.1 0.2\n-0.3\n";
    }
    const auto txt = load_waveform(dir / "b.txt");
    CHECK(txt.sample_rate == 8000.0);
    CHECK(txt.samples == std::vector<double>{0.1, 0.2, -0.3});
    CHECK_THROWS_AS(load_waveform(dir / "missing.wav"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("classifier file round-trip") {
    AudioClassifierConfig cfg{{{4, 32, 8}, {6, 8, 2}}, 3};
    const AudioClassifier clf(cfg, 5);
    const fs::path path = fs::temp_directory_path() / "avsd_clf.txt";
    clf.save(path);
    const auto back = AudioClassifier::load(path);
    std::vector<double> x(2000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(0.3 * static_cast<double>(i));
    CHECK((back.forward(x).logits.array() == clf.forward(x).logits.array()).all());
    fs::remove(path);
}
