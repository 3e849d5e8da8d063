#pragma once

#include <stdexcept>
#include <string>

namespace vmr {

/// Base of every error raised by the library. The CLI maps any Error to
/// exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VMR_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// frontend
VMR_DEFINE_ERROR(LexError);
VMR_DEFINE_ERROR(ParseError);

// datagen
VMR_DEFINE_ERROR(EmptyCorpus);
VMR_DEFINE_ERROR(ConfigError);
VMR_DEFINE_ERROR(NoAlternative);
VMR_DEFINE_ERROR(NoEligibleLocation);

// tensors and model
VMR_DEFINE_ERROR(IndexOutOfRange);
VMR_DEFINE_ERROR(ShapeMismatch);
VMR_DEFINE_ERROR(DegenerateRow);
VMR_DEFINE_ERROR(NotScalar);
VMR_DEFINE_ERROR(EmptyTarget);

// training, checkpoints, evaluation
VMR_DEFINE_ERROR(DatasetModelMismatch);
VMR_DEFINE_ERROR(NonFiniteLoss);
VMR_DEFINE_ERROR(EmptyPartition);
VMR_DEFINE_ERROR(PairingError);
VMR_DEFINE_ERROR(IoError);
VMR_DEFINE_ERROR(VersionMismatch);

#undef VMR_DEFINE_ERROR

}  // namespace vmr
