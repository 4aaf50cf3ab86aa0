void scatter(int n, int A[const restrict static n], int p[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++)
    B[p[i]] = A[i] + i;
}
