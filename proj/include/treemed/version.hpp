#pragma once

#define TREEMED_VERSION "0.1.0"
