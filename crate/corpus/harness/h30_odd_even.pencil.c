void odd_even(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++) {
    if (i % 2 == 0)
      B[i] = A[i];
    else
      B[i] = -A[i];
  }
}
