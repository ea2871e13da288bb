#pragma once

#include "frwkv/config.hpp"

FRWKV_BEGIN_NAMESPACE

/// Keeps freed tensor buffers in the process heap instead of returning them to
/// the kernel, so repeated forward/backward passes reuse memory rather than
/// faulting in fresh pages. No-op outside glibc. Call once at startup.
void tune_allocator();

FRWKV_END_NAMESPACE
