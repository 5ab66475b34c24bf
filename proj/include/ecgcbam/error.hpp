#pragma once

#include <stdexcept>
#include <string>

namespace ecgcbam {

// Base of every error raised by the library. The CLI maps any of these to a
// one-line diagnostic and a nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ECGCBAM_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

ECGCBAM_DEFINE_ERROR(RecordingTooShort);
ECGCBAM_DEFINE_ERROR(InvalidSpec);
ECGCBAM_DEFINE_ERROR(NoPeaksFound);
ECGCBAM_DEFINE_ERROR(InsufficientData);
ECGCBAM_DEFINE_ERROR(ShapeMismatch);
ECGCBAM_DEFINE_ERROR(FormatError);
ECGCBAM_DEFINE_ERROR(SingleClass);
ECGCBAM_DEFINE_ERROR(EmptyManifest);
ECGCBAM_DEFINE_ERROR(EmptyDataset);
ECGCBAM_DEFINE_ERROR(DivergenceDetected);

#undef ECGCBAM_DEFINE_ERROR

}  // namespace ecgcbam
