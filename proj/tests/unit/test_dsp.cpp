#include <doctest.h>

#include <cmath>
#include <numbers>

#include "biomark/dsp.hpp"
#include "biomark/error.hpp"
#include "biomark/rng.hpp"
#include "scratch.hpp"

using namespace biomark;
using namespace biomark::dsp;

namespace {

double analog_lowpass(double f, double fc, double fs, int n) {
    const double w = std::tan(std::numbers::pi * f / fs);
    const double wc = std::tan(std::numbers::pi * fc / fs);
    return 1.0 / std::sqrt(1.0 + std::pow(w / wc, 2 * n));
}

std::vector<double> tone(double f, double fs, std::size_t n, double amp = 1.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / fs);
    return x;
}

}  // namespace

TEST_CASE("95 Hz ninth-order lowpass") {
    const double fc[] = {95.0};
    const auto lp = design_butterworth(FilterKind::Lowpass, 9, fc, 1000.0);
    CHECK(lp.cascade_order() == 9);
    CHECK(std::abs(lp.magnitude(95.0) - 1.0 / std::sqrt(2.0)) < 1e-6);
    CHECK(std::abs(lp.magnitude(0.0) - 1.0) < 1e-12);
    const double oracle = analog_lowpass(150.0, 95.0, 1000.0, 9);
    CHECK(std::abs(lp.magnitude(150.0) - oracle) < 0.1 * oracle);
    // bilinear design with a prewarped edge reproduces the warped analog curve exactly
    for (double f : {10.0, 60.0, 150.0, 300.0}) CHECK(std::abs(lp.magnitude(f) - analog_lowpass(f, 95.0, 1000.0, 9)) < 1e-9 * analog_lowpass(f, 95.0, 1000.0, 9) + 1e-15);
    for (auto p : lp.poles()) CHECK(std::abs(p) < 1.0);

    // steady-state amplitude of a 10 Hz tone
    const auto y = apply_filter_cascade(lp, tone(10.0, 1000.0, 5000));
    double peak = 0.0;
    for (std::size_t i = 4000; i < y.size(); ++i) peak = std::max(peak, std::abs(y[i]));
    CHECK(std::abs(peak - lp.magnitude(10.0)) < 1e-3);
    CHECK(std::abs(peak - 1.0) < 1e-3);
}

TEST_CASE("designed cascades are stable") {
    Rng rng(17);
    for (int t = 0; t < 300; ++t) {
        const int order = 1 + static_cast<int>(rng.below(12));
        const double fs = 1000.0;
        const double c = (0.01 + 0.48 * rng.uniform()) * fs;
        const double one[] = {c};
        for (auto kind : {FilterKind::Lowpass, FilterKind::Highpass}) {
            const auto f = design_butterworth(kind, order, one, fs);
            CHECK(f.cascade_order() == order);
            for (auto p : f.poles()) CHECK(std::abs(p) < 1.0);
        }
        const double lo = (0.01 + 0.4 * rng.uniform()) * fs;
        const double two[] = {lo, std::min(lo + (0.01 + 0.07 * rng.uniform()) * fs, 0.49 * fs)};
        const auto bs = design_butterworth(FilterKind::Bandstop, order, two, fs);
        CHECK(bs.cascade_order() == 2 * order);
        for (auto p : bs.poles()) CHECK(std::abs(p) < 1.0);
    }
}

TEST_CASE("notch and highpass edges") {
    const double notch[] = {49.0, 51.0};
    const auto bs = design_butterworth(FilterKind::Bandstop, 4, notch, 1000.0);
    CHECK(std::abs(bs.magnitude(49.0) - 1.0 / std::sqrt(2.0)) < 1e-6);
    CHECK(std::abs(bs.magnitude(51.0) - 1.0 / std::sqrt(2.0)) < 1e-6);
    CHECK(bs.magnitude(50.0) < 1e-6);
    const double hp_c[] = {1.0};
    const auto hp = design_butterworth(FilterKind::Highpass, 4, hp_c, 1000.0);
    CHECK(hp.magnitude(0.0) < 1e-12);
    CHECK(std::abs(hp.magnitude(1.0) - 1.0 / std::sqrt(2.0)) < 1e-6);
    const double bad[] = {600.0};
    CHECK_THROWS_AS(design_butterworth(FilterKind::Lowpass, 4, bad, 1000.0), ValidationError);
}

TEST_CASE("filtering is linear") {
    const double fc[] = {40.0};
    const auto lp = design_butterworth(FilterKind::Lowpass, 6, fc, 250.0);
    const std::vector<double> zero(500, 0.0);
    for (double v : apply_filter_cascade(lp, zero)) CHECK(v == 0.0);
    Rng rng(3);
    std::vector<double> x(500), ax(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.normal();
        ax[i] = -3.5 * x[i];
    }
    const auto y = apply_filter_cascade(lp, x);
    const auto ay = apply_filter_cascade(lp, ax);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(ay[i] + 3.5 * y[i]) <= 1e-12 * (1.0 + std::abs(ay[i])));
    const auto zp = apply_filter_cascade(lp, x, true);
    CHECK(zp.size() == x.size());
}

TEST_CASE("resampling and epoching") {
    std::vector<double> x(4000, 1.0);
    CHECK(resample(x, 1000, 250).size() == 1000);
    CHECK(resample(x, 1000, 1000) == x);
    CHECK_THROWS_AS(resample(x, 1000, 300), ValidationError);
    std::vector<double> five_min(300 * 250, 0.5);
    CHECK(epoch_signal(five_min, 250, 1.0).n_epochs == 300);
    std::vector<double> one(250, 0.5);
    CHECK(epoch_signal(one, 250, 1.0).n_epochs == 1);
}

TEST_CASE("relative band power") {
    const double fs = 250.0;
    const auto bands = default_bands();
    SUBCASE("10 Hz tone is almost all alpha") {
        const auto set = epoch_signal(tone(10.0, fs, 250 * 20), fs, 1.0);
        const auto rel = band_relative_power(set, bands);
        CHECK(rel(0, 2) >= 0.95);
        for (Eigen::Index b = 0; b < rel.cols(); ++b) {
            CHECK(rel(0, b) >= 0.0);
            CHECK(rel(0, b) <= 1.0);
        }
    }
    SUBCASE("white noise follows the flat-spectrum share") {
        Rng rng(8);
        std::vector<double> x(250 * 300);
        for (auto& v : x) v = rng.normal();
        const auto rel = band_relative_power(epoch_signal(x, fs, 1.0), bands);
        // 4 Hz of a 92 Hz denominator (1-95 minus the notch); nominal 4/94 within tolerance either way
        CHECK(std::abs(rel(0, 2) - 4.0 / 94.0) < 0.01);
    }
    SUBCASE("disjoint tiling bands sum to one") {
        Rng rng(9);
        std::vector<double> x(250 * 10);
        for (auto& v : x) v = rng.normal();
        const std::vector<BandDefinition> tiles = {{"a", 1, 7.5}, {"b", 7.5, 30}, {"c", 30, 49}, {"d", 49, 95}};
        const auto set = epoch_signal(x, fs, 1.0);
        const auto rel = band_relative_power(set, tiles);
        CHECK(std::abs(rel.sum() - 1.0) < 1e-9);
        std::vector<double> scaled = x;
        for (auto& v : scaled) v *= -7.25;
        const auto rel2 = band_relative_power(epoch_signal(scaled, fs, 1.0), bands);
        const auto rel1 = band_relative_power(set, bands);
        CHECK((rel2 - rel1).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("constant signal is rejected") {
        const std::vector<double> c(500, 2.0);
        CHECK_THROWS_AS(band_relative_power(epoch_signal(c, fs, 1.0), bands), NumericalError);
    }
}

TEST_CASE("epoch file round trip") {
    EpochSet e;
    e.channels = 2;
    e.n_epochs = 3;
    e.samples_per_epoch = 4;
    e.fs_hz = 4;
    e.channel_names = {"MEG0111", "MEG0121"};
    for (int i = 0; i < 24; ++i) e.data.push_back(0.25 * i);
    testutil::ScratchDir dir("epochs");
    write_epoch_file(e, dir / "s.f32");
    const auto back = read_epoch_file(dir / "s.f32");
    CHECK(back.data == e.data);
    CHECK(back.channel_names == e.channel_names);
    CHECK(back.n_epochs == 3);
}

TEST_CASE("continuous preprocessing chain") {
    Rng rng(4);
    std::vector<double> x(1000 * 12);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * 10 * static_cast<double>(i) / 1000.0) + 0.1 * rng.normal();
    const auto set = preprocess_continuous(x, 1000.0);
    CHECK(set.fs_hz == 250.0);
    CHECK(set.n_epochs == 12);
    CHECK(band_relative_power(set, default_bands())(0, 2) > 0.8);
}
