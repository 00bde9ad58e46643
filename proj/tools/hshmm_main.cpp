// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include <iostream>

int main() {
  std::cout << "hshmm\n";
  return 0;
}
