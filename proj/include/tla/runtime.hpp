#pragma once

namespace tla {

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates and frees the same activation-sized buffers every
/// minibatch; with glibc defaults each of those costs fresh page faults.
/// No effect on other C libraries.
void configure_allocator();

}  // namespace tla
