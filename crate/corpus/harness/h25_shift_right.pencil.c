void shift_right(int n, int A[const restrict static n])
{
  int i = n - 1;
  while (i > 0) {
    A[i] = A[i - 1];
    i -= 1;
  }
  A[0] = 0;
}
