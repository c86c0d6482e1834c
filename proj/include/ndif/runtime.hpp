// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace ndif {

// Keeps freed activation buffers in the heap instead of returning them to
// the OS after every step. Training allocates and frees the same large
// blocks thousands of times; without this a third of the time goes to page
// faults. No-op outside glibc.
void tune_allocator();

}  // namespace ndif
