#pragma once

#include "monoalign/align.hpp"
#include "monoalign/config.hpp"
#include "monoalign/corpus.hpp"
#include "monoalign/duration.hpp"
#include "monoalign/encoders.hpp"
#include "monoalign/matrix_io.hpp"
#include "monoalign/monoalign_version.hpp"
#include "monoalign/ops.hpp"
#include "monoalign/oracle.hpp"
#include "monoalign/params.hpp"
#include "monoalign/rng.hpp"
#include "monoalign/tape.hpp"
#include "monoalign/tensor.hpp"
#include "monoalign/trainer.hpp"
