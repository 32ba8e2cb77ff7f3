#ifndef ABRSIM_MEDIA_H_
#define ABRSIM_MEDIA_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abrsim {

// One encoding of the content. `index` is the 1-based position in the ladder.
struct Representation {
  int index = 0;
  int width = 0;
  int height = 0;
  double bitrate_kbps = 0.0;

  bool operator==(const Representation&) const = default;
};

// Per-segment, per-representation attributes embedded in the manifest.
struct SegmentInfo {
  double size_bits = 0.0;
  double quality = 0.0;  // VMAF-like, [0, 100]

  bool operator==(const SegmentInfo&) const = default;
};

// The 13-rung H.264/HEVC ladder used for every source sequence.
std::vector<Representation> DefaultLadder();

// Immutable description of a video: ladder plus a segment_count x ladder_size
// matrix of sizes and qualities. The constructor validates every invariant
// and throws abrsim::Error on violation.
class Manifest {
 public:
  Manifest(double segment_duration_s, std::vector<Representation> ladder,
           std::vector<std::vector<SegmentInfo>> segments);

  double segment_duration_s() const { return segment_duration_s_; }
  const std::vector<Representation>& ladder() const { return ladder_; }
  const std::vector<std::vector<SegmentInfo>>& segments() const {
    return segments_;
  }

  int ladder_size() const { return static_cast<int>(ladder_.size()); }
  int segment_count() const { return static_cast<int>(segments_.size()); }

  bool valid_rep(int rep) const { return rep >= 1 && rep <= ladder_size(); }

  // `chunk` is 0-based, `rep` is a 1-based ladder index.
  const SegmentInfo& segment(int chunk, int rep) const;
  double nominal_kbps(int rep) const;
  // size_bits / segment_duration_s, in kb/s.
  double actual_kbps(int chunk, int rep) const;

  bool operator==(const Manifest&) const = default;

 private:
  double segment_duration_s_;
  std::vector<Representation> ladder_;
  std::vector<std::vector<SegmentInfo>> segments_;
};

// Checks ladder ordering/contiguity; throws abrsim::Error.
void ValidateLadder(std::span<const Representation> ladder);

// JSON manifest document; see docs/formats.md.
Manifest ParseManifest(std::string_view text);
std::string SerializeManifest(const Manifest& manifest);

// Builds a manifest whose sizes equal nominal bitrate x duration and whose
// qualities follow a saturating curve in the nominal bitrate. Used by tests
// and the CLI's synthetic mode.
Manifest SyntheticManifest(int segment_count,
                           std::vector<Representation> ladder,
                           double segment_duration_s = 4.0);

// Mean of size_bits / segment_duration_s over the chosen segments, in kb/s.
// choices[k] is the ladder index of segment k.
double AverageBitrateKbps(const Manifest& manifest, std::span<const int> choices);

}  // namespace abrsim

#endif  // ABRSIM_MEDIA_H_
