void stencil(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 1; i < n - 1; i++)
    B[i] = A[i - 1] + 2 * A[i] + A[i + 1];
}
