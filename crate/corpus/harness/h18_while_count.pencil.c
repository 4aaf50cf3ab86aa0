int collatz_steps(int n, int A[const restrict static n])
{
  int total = 0;
  for (int i = 0; i < n; i++) {
    int x = A[i] + 1;
    while (x != 1) {
      if (x % 2 == 0)
        x = x / 2;
      else
        x = 3 * x + 1;
      total += 1;
    }
  }
  return total;
}
