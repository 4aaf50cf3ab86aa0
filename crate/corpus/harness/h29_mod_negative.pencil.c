void signed_ops(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++)
    B[i] = (A[i] - 5) % 3 + (A[i] - 6) / 4;
}
