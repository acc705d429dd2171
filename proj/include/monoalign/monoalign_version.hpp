#pragma once

#define MONOALIGN_VERSION_MAJOR 0
#define MONOALIGN_VERSION_MINOR 1
#define MONOALIGN_VERSION_PATCH 0
#define MONOALIGN_VERSION "0.1.0"
