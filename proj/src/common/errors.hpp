#pragma once

#include <stdexcept>
#include <string>

namespace pagestore {

// Error classes map 1:1 onto CLI exit codes.
enum class ErrorClass : int {
  kConfig = 2,
  kSpace = 3,
  kReplication = 4,
  kCorruption = 5,
};

class StoreError : public std::runtime_error {
 public:
  StoreError(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const { return cls_; }
  int exit_code() const { return static_cast<int>(cls_); }

 private:
  ErrorClass cls_;
};

#define PAGESTORE_ERROR(Name, Class)                       \
  class Name : public StoreError {                         \
   public:                                                 \
    explicit Name(const std::string& what = #Name)         \
        : StoreError(ErrorClass::Class, what) {}           \
  }

PAGESTORE_ERROR(InvalidArgument, kConfig);
PAGESTORE_ERROR(ConfigError, kConfig);
PAGESTORE_ERROR(Unmapped, kConfig);
PAGESTORE_ERROR(NotFound, kConfig);
PAGESTORE_ERROR(OutOfRange, kConfig);
PAGESTORE_ERROR(FutureLsn, kConfig);
PAGESTORE_ERROR(Unrepresentable, kConfig);
PAGESTORE_ERROR(DoubleFree, kConfig);
PAGESTORE_ERROR(IllegalMove, kConfig);
PAGESTORE_ERROR(AlreadyInitialized, kConfig);
PAGESTORE_ERROR(MissingCorpus, kConfig);
PAGESTORE_ERROR(OutOfPhysicalSpace, kSpace);
PAGESTORE_ERROR(OutOfLogicalSpace, kSpace);
PAGESTORE_ERROR(ClusterFull, kSpace);
PAGESTORE_ERROR(ReplicationLost, kReplication);
PAGESTORE_ERROR(CorruptWal, kCorruption);
PAGESTORE_ERROR(CorruptPayload, kCorruption);
PAGESTORE_ERROR(CorruptImage, kCorruption);

#undef PAGESTORE_ERROR

}  // namespace pagestore
