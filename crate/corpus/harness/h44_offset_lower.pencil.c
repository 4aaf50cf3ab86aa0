void tail(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = n / 2; i < n; i++)
    B[i - n / 2] = A[i];
}
