void permute(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++)
    B[(3 * i + 1) % n] = A[i];
}
