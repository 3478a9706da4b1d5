#include "eac/eac.hpp"
int main() { return 0; }
