#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lsgame {

enum class Errc {
  kInvalidArgument,
  kSchemaViolation,
  kSingularMatrix,
  kNonPositiveDiagonal,
  kOverflow,
  kNonPositiveDesirability,
  kNonFiniteState,
  kNonFiniteControl,
  kDegenerateWeights,
  kHorizonExhausted,
  kBandwidthNonPositive,
  kMissingControls,
  kPlayerCountMismatch,
  kDomainTooNarrow,
  kInstabilityDetected,
  kGridMismatch,
  kIo,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kSchemaViolation: return "SchemaViolation";
    case Errc::kSingularMatrix: return "SingularMatrix";
    case Errc::kNonPositiveDiagonal: return "NonPositiveDiagonal";
    case Errc::kOverflow: return "Overflow";
    case Errc::kNonPositiveDesirability: return "NonPositiveDesirability";
    case Errc::kNonFiniteState: return "NonFiniteState";
    case Errc::kNonFiniteControl: return "NonFiniteControl";
    case Errc::kDegenerateWeights: return "DegenerateWeights";
    case Errc::kHorizonExhausted: return "HorizonExhausted";
    case Errc::kBandwidthNonPositive: return "BandwidthNonPositive";
    case Errc::kMissingControls: return "MissingControls";
    case Errc::kPlayerCountMismatch: return "PlayerCountMismatch";
    case Errc::kDomainTooNarrow: return "DomainTooNarrow";
    case Errc::kInstabilityDetected: return "InstabilityDetected";
    case Errc::kGridMismatch: return "GridMismatch";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }
  /// The message without the code prefix.
  [[nodiscard]] const std::string& message() const noexcept { return message_; }

  /// Input problems (bad config, bad arguments) as opposed to numerical
  /// failures discovered while computing.
  [[nodiscard]] bool is_validation() const noexcept {
    return code_ == Errc::kInvalidArgument || code_ == Errc::kSchemaViolation;
  }

 private:
  Errc code_;
  std::string message_;
};

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace lsgame
