#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mipilot {

inline constexpr int kChannels = 16;
inline constexpr int kSampleRateHz = 250;
inline constexpr int kNumClasses = 4;

// Motor imagery classes. The numeric values are the on-disk label bytes.
enum class MiClass : std::uint8_t { N = 0, R = 1, L = 2, K = 3 };

inline constexpr std::array<MiClass, kNumClasses> kAllClasses{MiClass::N, MiClass::R, MiClass::L,
                                                              MiClass::K};

inline constexpr int class_index(MiClass c) { return static_cast<int>(c); }
char class_letter(MiClass c);
std::optional<MiClass> class_from_letter(char c);
std::optional<MiClass> class_from_index(int i);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MIPILOT_ERROR(Name)                 \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

MIPILOT_ERROR(DesignError)
MIPILOT_ERROR(ArgumentError)
MIPILOT_ERROR(ShapeError)
MIPILOT_ERROR(StateError)
MIPILOT_ERROR(FormatError)
MIPILOT_ERROR(LabelingError)
MIPILOT_ERROR(BalancingError)
MIPILOT_ERROR(TrainingError)
MIPILOT_ERROR(ContractError)
MIPILOT_ERROR(ProtocolError)
MIPILOT_ERROR(GapError)
MIPILOT_ERROR(NumericalError)

#undef MIPILOT_ERROR

}  // namespace mipilot
