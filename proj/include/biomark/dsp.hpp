#pragma once

#include <Eigen/Dense>

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace biomark::dsp {

/// Half-open frequency band [low_hz, high_hz).
struct BandDefinition {
    std::string name;
    double low_hz = 0.0;
    double high_hz = 0.0;
};

/// delta 2-4, theta 4-8, alpha 8-12, beta 12-35, low-gamma 30-48, high-gamma 52-86 Hz.
std::vector<BandDefinition> default_bands();

enum class FilterKind { Lowpass, Highpass, Bandstop };

/// Second-order section with a0 normalized to 1. First-order sections have b2 = a2 = 0.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;

    bool first_order() const { return b2 == 0.0 && a2 == 0.0; }
};

struct FilterCascade {
    std::vector<Biquad> sections;
    FilterKind kind = FilterKind::Lowpass;
    int order = 0;                    // design (prototype) order
    std::vector<double> cutoffs_hz;   // one edge, or two for bandstop
    double fs_hz = 0.0;

    /// Sum of section orders. Equals `order`, or 2*order for bandstop.
    int cascade_order() const;
    std::complex<double> response(double f_hz) const;
    double magnitude(double f_hz) const { return std::abs(response(f_hz)); }
    std::vector<std::complex<double>> poles() const;
};

/// Digital Butterworth via analog prototype and bilinear transform with
/// prewarped edges. Bandstop follows the usual convention of a prototype of
/// `order` mapped to a 2*order filter.
FilterCascade design_butterworth(FilterKind kind, int order, std::span<const double> cutoffs_hz, double fs_hz);

/// Causal pass through every section (zero initial state). With zero_phase the
/// signal is filtered forward and then backward.
std::vector<double> apply_filter_cascade(const FilterCascade& filter, std::span<const double> signal,
                                         bool zero_phase = false);

/// Integer-factor decimation: keeps every (fs_in/fs_out)-th sample from index 0.
/// The caller is responsible for anti-alias filtering.
std::vector<double> resample(std::span<const double> signal, double fs_in, double fs_out);

/// Channel-major epochs: data[(channel * n_epochs + epoch) * samples_per_epoch + sample].
struct EpochSet {
    std::size_t channels = 0;
    std::size_t n_epochs = 0;
    std::size_t samples_per_epoch = 0;
    double fs_hz = 0.0;
    std::vector<std::string> channel_names;
    std::vector<double> data;

    std::span<const double> epoch(std::size_t channel, std::size_t e) const {
        return {data.data() + (channel * n_epochs + e) * samples_per_epoch, samples_per_epoch};
    }
};

/// Splits one channel into floor(len / epoch_len) contiguous epochs; the remainder is dropped.
EpochSet epoch_signal(std::span<const double> signal, double fs_hz, double epoch_seconds);

struct FrequencyRange {
    double low_hz = 0.0;
    double high_hz = 0.0;
};

struct SpectralConfig {
    FrequencyRange analysis{1.0, 95.0};
    /// Removed from both band and total power (the mains notch).
    std::vector<FrequencyRange> exclusions{{49.0, 51.0}};
};

/// Per channel (rows) and band (columns): Hann-windowed, mean-removed periodograms
/// averaged over epochs, band power over the analysis range divided by total power.
Eigen::MatrixXd band_relative_power(const EpochSet& epochs, std::span<const BandDefinition> bands,
                                    const SpectralConfig& config = {});

/// Reads a little-endian float32 channel-major epoch file and its JSON sidecar
/// {channels, fs_hz, epoch_len, n_epochs, channel_names}. When `sidecar` is
/// empty, "<file>.json" is used.
EpochSet read_epoch_file(const std::filesystem::path& file, std::filesystem::path sidecar = {});
void write_epoch_file(const EpochSet& epochs, const std::filesystem::path& file,
                      const std::filesystem::path& sidecar = {});

/// The acquisition chain used for continuous recordings: 95 Hz 9th-order
/// lowpass, 1 Hz 4th-order highpass, 49-51 Hz notch, decimation and 1 s epochs.
struct PreprocessConfig {
    double lowpass_hz = 95.0;
    int lowpass_order = 9;
    double highpass_hz = 1.0;
    int highpass_order = 4;
    double notch_low_hz = 49.0;
    double notch_high_hz = 51.0;
    int notch_order = 4;
    double target_fs_hz = 250.0;
    double epoch_seconds = 1.0;
    bool zero_phase = false;
};

EpochSet preprocess_continuous(std::span<const double> signal, double fs_hz, const PreprocessConfig& config = {});

}  // namespace biomark::dsp
