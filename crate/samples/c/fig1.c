#include <stdio.h>

int f(void) {
  int a;
  a = 42;
  return a;
}
int g(void) {
  int b;
  b = 42;
  return b;
}
int main(void) {
  int x, y;
  x = f();
  y = g();
  return 0;
}
