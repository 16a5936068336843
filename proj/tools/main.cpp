#include "token2vec/cli.hpp"
#include "token2vec/runtime.hpp"

int main(int argc, char** argv) {
  token2vec::tune_allocator();
  return token2vec::cli::run(argc, argv);
}
